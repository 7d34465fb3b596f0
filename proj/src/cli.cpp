#include "mcen/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "mcen/io.hpp"
#include "mcen/parallel.hpp"

namespace mcen {

const char* tool_version() { return MCEN_VERSION; }

namespace {

namespace fs = std::filesystem;

struct Common {
    std::string data;
    std::string responses;
    std::string covariates;
    std::string kind = "gaussian";
    std::uint64_t seed = 1;
    std::string out = ".";
    int threads = 0;
    int max_sweeps = 10000;
};

struct Dataset {
    Matrix X, Y;
    std::vector<std::string> covariates, responses;
    ResponseKind kind;
};

Dataset load(const Common& c) {
    Dataset d;
    d.kind = response_kind_from_string(c.kind);
    const Table t = read_csv(c.data);
    d.responses = split_list(c.responses);
    if (d.responses.empty()) throw Error(ErrorKind::InvalidArgument, "--responses names no columns");
    for (const auto& name : d.responses) t.column(name);
    if (!c.covariates.empty()) {
        d.covariates = split_list(c.covariates);
    } else {
        for (const auto& h : t.header)
            if (std::find(d.responses.begin(), d.responses.end(), h) == d.responses.end()) d.covariates.push_back(h);
    }
    if (d.covariates.empty()) throw Error(ErrorKind::InvalidArgument, "no covariate columns");
    d.X = t.columns(d.covariates);
    d.Y = t.columns(d.responses);
    return d;
}

Json manifest(const std::string& command, const Json& config, std::uint64_t seed) {
    return Json{{"tool", "mcen"}, {"version", tool_version()}, {"command", command}, {"config", config}, {"seed", seed}};
}

Json common_config(const Common& c, const Dataset& d) {
    return Json{{"data", c.data},       {"kind", c.kind},       {"responses", d.responses},
                {"covariates", d.covariates}, {"threads", c.threads}, {"out", c.out},
                {"max_sweeps", c.max_sweeps}};
}

fs::path out_dir(const Common& c) {
    fs::path p(c.out);
    std::error_code ec;
    fs::create_directories(p, ec);
    if (ec) throw Error(ErrorKind::InvalidArgument, "cannot create output directory '" + c.out + "'");
    return p;
}

void add_common(CLI::App* sub, Common& c, bool needs_data) {
    auto* data = sub->add_option("--data", c.data, "CSV file with a header row");
    auto* resp = sub->add_option("--responses", c.responses, "comma-separated response column names");
    if (needs_data) {
        data->required()->check(CLI::ExistingFile);
        resp->required();
    }
    sub->add_option("--covariates", c.covariates, "comma-separated covariate columns (default: all others)");
    sub->add_option("--kind", c.kind, "gaussian or binomial")->check(CLI::IsMember({"gaussian", "binomial"}));
    sub->add_option("--seed", c.seed, "random seed");
    sub->add_option("--out", c.out, "output directory");
    sub->add_option("--threads", c.threads, "thread budget (0 = all available)")->check(CLI::NonNegativeNumber);
    if (needs_data)
        sub->add_option("--max-sweeps", c.max_sweeps, "coordinate-descent sweep cap per solve")
            ->check(CLI::PositiveNumber);
}

Json fit_document(const Json& man, const Dataset& d, const Json& fit) {
    return Json{{"manifest", man}, {"covariates", d.covariates}, {"responses", d.responses}, {"fit", fit}};
}

std::string fit_summary(const Matrix& coef, const ClusterPartition& D, const std::vector<std::string>& names,
                        bool intercept_row, bool converged) {
    std::ostringstream s;
    s << "response,cluster,nonzero\n";
    const Index skip = intercept_row ? 1 : 0;
    for (Index k = 0; k < coef.cols(); ++k)
        s << csv_field(names[static_cast<std::size_t>(k)]) << ',' << D.cluster_of(static_cast<int>(k)) + 1 << ','
          << (coef.col(k).tail(coef.rows() - skip).array() != 0.0).count() << '\n';
    if (!converged) s << "# warning: solver did not converge\n";
    return s.str();
}

// Writes fit.json and fit_summary.csv; returns whether every solve converged.
bool write_fit(const fs::path& dir, const Json& man, const Dataset& d, const TuningTriple& triple,
               const Common& c) {
    const std::uint64_t seed = c.seed;
    bool ok;
    Json doc;
    std::string summary;
    if (d.kind == ResponseKind::gaussian) {
        FitSettings s;
        s.kmeans.seed = seed;
        s.solver.max_sweeps = c.max_sweeps;
        McenFit f = fit(d.X, d.Y, triple, s);
        f.seed = seed;
        ok = f.solver_converged && f.converged;
        doc = fit_document(man, d, to_json(f));
        summary = fit_summary(original_scale_coefficients(f), f.D_hat, d.responses, false, ok);
    } else {
        BinomialFitSettings s;
        s.kmeans.seed = seed;
        s.solver.max_sweeps = c.max_sweeps;
        BinomialFit f = fit_binomial(d.X, d.Y, triple, s);
        f.seed = seed;
        ok = f.solver_converged && f.converged;
        doc = fit_document(man, d, to_json(f));
        summary = fit_summary(original_scale_coefficients(f), f.D_hat, d.responses, true, ok);
    }
    write_text((dir / "fit.json").string(), doc.dump(2) + "\n");
    write_text((dir / "fit_summary.csv").string(), "# " + man.dump() + "\n" + summary);
    return ok;
}

double resolve_delta(const std::string& text, const Dataset& d) {
    if (text == "max") {
        const StandardizedData s = standardize(d.X, d.Y, d.kind);
        return d.kind == ResponseKind::gaussian ? delta_max(s.X.values(), s.Y.values())
                                                : delta_max_binomial(s.X.values(), s.Y.values());
    }
    std::size_t used = 0;
    double v = 0;
    try {
        v = std::stod(text, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != text.size() || !(v >= 0)) throw Error(ErrorKind::InvalidArgument, "--delta must be 'max' or >= 0");
    return v;
}

template <class T>
std::vector<T> parse_values(const std::string& text, const char* flag) {
    std::vector<T> out;
    for (const auto& item : split_list(text)) {
        std::size_t used = 0;
        try {
            if constexpr (std::is_same_v<T, int>)
                out.push_back(std::stoi(item, &used));
            else
                out.push_back(std::stod(item, &used));
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != item.size()) throw Error(ErrorKind::InvalidArgument, std::string(flag) + ": bad value '" + item + "'");
    }
    if (out.empty()) throw Error(ErrorKind::InvalidArgument, std::string(flag) + " is empty");
    return out;
}

int cmd_fit(const Common& c, int Q, double gamma, const std::string& delta_text, std::ostream& out) {
    const Dataset d = load(c);
    const TuningTriple triple{Q, gamma, resolve_delta(delta_text, d)};
    triple.validate();
    Json cfg = common_config(c, d);
    cfg["triple"] = to_json(triple);
    const Json man = manifest("fit", cfg, c.seed);
    const fs::path dir = out_dir(c);
    const bool ok = write_fit(dir, man, d, triple, c);
    out << "wrote " << (dir / "fit.json").string() << '\n';
    return ok ? kExitOk : kExitNonConvergence;
}

struct CvFlags {
    std::string Q = "auto", gamma = "auto", delta = "auto", grid = "auto";
    int K = 10;
    int delta_count = 100;
};

CvGrid resolve_grid(const CvFlags& f, const Dataset& d, std::uint64_t seed) {
    CvGrid g;
    g.K = f.K;
    g.seed = seed;
    g.delta_count = f.delta_count;
    std::string Qs = f.Q, gs = f.gamma, ds = f.delta;
    if (f.grid != "auto") {
        const Json j = read_json(f.grid);
        auto list = [&](const char* key, std::string& target) {
            if (!j.contains(key)) return;
            const Json& v = j.at(key);
            if (v.is_string()) {
                target = v.get<std::string>();
                return;
            }
            std::string joined;
            for (const Json& x : v) joined += (joined.empty() ? "" : ",") + x.dump();
            target = joined;
        };
        list("Q", Qs);
        list("gamma", gs);
        list("delta", ds);
    }
    const int r = static_cast<int>(d.Y.cols());
    if (Qs == "auto") {
        g.Q_values.clear();
        for (int q = 1; q <= std::min(4, r); ++q) g.Q_values.push_back(q);
    } else {
        g.Q_values = parse_values<int>(Qs, "--Q");
    }
    g.gamma_values = gs == "auto" ? auto_gamma_grid(d.kind, d.X.rows()) : parse_values<double>(gs, "--gamma");
    g.delta_values = ds == "auto" ? std::vector<double>{} : parse_values<double>(ds, "--delta");
    return g;
}

int cmd_cv(const Common& c, const CvFlags& f, std::ostream& out) {
    const Dataset d = load(c);
    const CvGrid grid = resolve_grid(f, d, c.seed);
    CvSettings s;
    s.gaussian.kmeans.seed = c.seed;
    s.binomial.kmeans.seed = c.seed;
    s.gaussian.solver.max_sweeps = c.max_sweeps;
    s.binomial.solver.max_sweeps = c.max_sweeps;
    const CvResult res = d.kind == ResponseKind::gaussian ? cv_gaussian(d.X, d.Y, grid, s)
                                                          : cv_binomial(d.X, d.Y, grid, s);
    Json cfg = common_config(c, d);
    cfg["grid"] = {{"Q", grid.Q_values},
                   {"gamma", grid.gamma_values},
                   {"delta", res.delta_values},
                   {"K", grid.K},
                   {"delta_count", grid.delta_count}};
    const Json man = manifest("cv", cfg, c.seed);
    const fs::path dir = out_dir(c);
    {
        std::ofstream table(dir / "cv_table.csv", std::ios::binary);
        write_csv(table, man, cv_header(), cv_rows(res));
        if (!table) throw Error(ErrorKind::ParseError, "cannot write cv_table.csv");
    }
    long invalid = 0;
    for (const CvCell& cell : res.table) invalid += cell.valid ? 0 : 1;
    const Json best{{"manifest", man},
                    {"best", to_json(res.best)},
                    {"criterion", res.best_criterion},
                    {"criterion_kind", to_string(res.criterion_kind)},
                    {"invalid_cells", invalid}};
    write_text((dir / "cv_best.json").string(), best.dump(2) + "\n");
    Json refit_cfg = cfg;
    refit_cfg["triple"] = to_json(res.best);
    const bool ok = write_fit(dir, manifest("cv", refit_cfg, c.seed), d, res.best, c);
    out << "best Q=" << res.best.Q << " gamma=" << format_double(res.best.gamma)
        << " delta=" << format_double(res.best.delta) << '\n';
    return ok ? kExitOk : kExitNonConvergence;
}

int cmd_predict(const Common& c, const std::string& fit_path, std::ostream& out) {
    const Json doc = read_json(fit_path);
    std::vector<std::string> covariates, responses;
    Json fit_json;
    try {
        covariates = doc.at("covariates").get<std::vector<std::string>>();
        responses = doc.at("responses").get<std::vector<std::string>>();
        fit_json = doc.at("fit");
    } catch (const Json::exception& e) {
        throw Error(ErrorKind::ParseError, fit_path + ": " + e.what());
    }
    const Table t = read_csv(c.data);
    const Matrix X = t.columns(covariates);
    Matrix pred;
    if (fit_kind(fit_json) == ResponseKind::gaussian)
        pred = predict(gaussian_fit_from_json(fit_json), X);
    else
        pred = predict_proba(binomial_fit_from_json(fit_json), X);
    const Json man = manifest("predict", Json{{"data", c.data}, {"fit", fit_path}, {"out", c.out}, {"threads", c.threads}},
                              c.seed);
    const fs::path dir = out_dir(c);
    std::ofstream f(dir / "predictions.csv", std::ios::binary);
    write_csv(f, man, responses, pred);
    if (!f) throw Error(ErrorKind::ParseError, "cannot write predictions.csv");
    out << "wrote " << (dir / "predictions.csv").string() << '\n';
    return kExitOk;
}

struct SimFlags {
    bool paper_mode = false;
    std::optional<int> replications;
    std::string methods = "MCEN,TMCEN,SEN";
    std::optional<double> eta, lambda;
    std::optional<Index> n, n_test, p;
    std::optional<int> K, delta_count;
    std::string gamma = "auto";
};

int cmd_simulate(const Common& c, const SimFlags& f, std::ostream& out) {
    const ResponseKind kind = response_kind_from_string(c.kind);
    SimDesign d = f.paper_mode ? SimDesign::paper(kind) : SimDesign::desk(kind);
    if (f.replications) d.replications = *f.replications;
    if (f.eta) d.eta = *f.eta;
    if (f.lambda) d.lambda = *f.lambda;
    if (f.n) d.n = *f.n;
    if (f.n_test) d.n_test = *f.n_test;
    if (f.p) d.p = *f.p;
    d.seed = c.seed;
    if (d.replications < 1) throw Error(ErrorKind::InvalidArgument, "--replications must be >= 1");
    SimProtocol proto = f.paper_mode ? SimProtocol::paper(kind, d.n) : SimProtocol::desk(kind, d.n);
    if (f.K) proto.K = *f.K;
    if (f.delta_count) proto.delta_count = *f.delta_count;
    if (f.gamma != "auto") proto.gamma_values = parse_values<double>(f.gamma, "--gamma");
    std::vector<Method> methods;
    for (const auto& m : split_list(f.methods)) methods.push_back(method_from_string(m));
    if (methods.empty()) throw Error(ErrorKind::InvalidArgument, "--methods is empty");

    const SimResult res = run_replications(d, methods, proto);

    std::vector<std::string> method_names;
    for (Method m : methods) method_names.push_back(to_string(m));
    const Json cfg{{"kind", c.kind},          {"paper_mode", f.paper_mode}, {"n", d.n},
                   {"p", d.p},                {"n_test", d.n_test},         {"eta", d.eta},
                   {"lambda", d.lambda},      {"rho", d.rho},               {"replications", d.replications},
                   {"methods", method_names}, {"Q", proto.Q_values},        {"gamma", proto.gamma_values},
                   {"delta_count", proto.delta_count}, {"K", proto.K},      {"threads", c.threads},
                   {"out", c.out}};
    const Json man = manifest("simulate", cfg, c.seed);
    const fs::path dir = out_dir(c);
    {
        std::ofstream csv(dir / "sim_results.csv", std::ios::binary);
        write_sim_csv(csv, man, res);
        if (!csv) throw Error(ErrorKind::ParseError, "cannot write sim_results.csv");
    }
    Json summary = summary_json(res);
    Json selected = Json::array();
    for (std::size_t i = 0; i < res.mcen_triples.size(); ++i) {
        if (!res.mcen_triples[i]) continue;
        Json a = Json::array();
        for (int l : res.mcen_partitions[i]->assignments()) a.push_back(l + 1);
        selected.push_back({{"replication", i + 1}, {"triple", to_json(*res.mcen_triples[i])}, {"assignments", a}});
    }
    Json doc{{"manifest", man}};
    doc["summary"] = summary["summary"];
    doc["failures"] = summary["failures"];
    doc["mcen_selected"] = selected;
    write_text((dir / "sim_summary.json").string(), doc.dump(2) + "\n");
    out << "wrote " << res.records.size() << " records, " << res.failures.size() << " failures\n";
    return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Multivariate cluster elastic net: fit, predict, cross-validate and simulate"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(tool_version()));

    Common c;
    int Q = 1;
    double gamma = 0;
    std::string delta;
    auto* fit_cmd = app.add_subcommand("fit", "fit one tuning triple and write fit.json");
    add_common(fit_cmd, c, true);
    fit_cmd->add_option("--Q", Q, "number of response clusters")->required()->check(CLI::PositiveNumber);
    fit_cmd->add_option("--gamma", gamma, "cluster fusion strength")->required()->check(CLI::NonNegativeNumber);
    fit_cmd->add_option("--delta", delta, "L1 strength, or 'max'")->required();

    CvFlags cvf;
    auto* cv_cmd = app.add_subcommand("cv", "K-fold cross-validation over (Q, gamma, delta), then refit");
    add_common(cv_cmd, c, true);
    cv_cmd->add_option("--Q", cvf.Q, "comma list or 'auto' (1..min(4, r))");
    cv_cmd->add_option("--gamma", cvf.gamma, "comma list or 'auto'");
    cv_cmd->add_option("--delta", cvf.delta, "comma list or 'auto' (path from delta_max)");
    cv_cmd->add_option("--grid", cvf.grid, "'auto' or a JSON file with Q, gamma and delta lists");
    cv_cmd->add_option("--K", cvf.K, "number of folds");
    cv_cmd->add_option("--delta-count", cvf.delta_count, "length of the automatic delta path")
        ->check(CLI::PositiveNumber);

    std::string fit_file;
    auto* pred_cmd = app.add_subcommand("predict", "predict from fit.json on new covariates");
    add_common(pred_cmd, c, false);
    pred_cmd->get_option("--data")->required()->check(CLI::ExistingFile);
    pred_cmd->add_option("--fit", fit_file, "fit.json written by fit or cv")->required()->check(CLI::ExistingFile);

    SimFlags sf;
    auto* sim_cmd = app.add_subcommand("simulate", "simulation study with MCEN, TMCEN and SEN");
    add_common(sim_cmd, c, false);
    sim_cmd->add_flag("--paper-mode", sf.paper_mode, "p = 300, 50 replications, K = 10, 100 delta values");
    sim_cmd->add_option("--replications", sf.replications);
    sim_cmd->add_option("--methods", sf.methods, "comma list of MCEN, TMCEN, SEN");
    sim_cmd->add_option("--eta", sf.eta);
    sim_cmd->add_option("--lambda", sf.lambda);
    sim_cmd->add_option("--n", sf.n);
    sim_cmd->add_option("--n-test", sf.n_test);
    sim_cmd->add_option("--p", sf.p);
    sim_cmd->add_option("--K", sf.K);
    sim_cmd->add_option("--delta-count", sf.delta_count);
    sim_cmd->add_option("--gamma", sf.gamma, "comma list or 'auto'");

    std::vector<std::string> argv_store{"mcen"};
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& a : argv_store) argv.push_back(a.data());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        set_thread_budget(c.threads);
        int code;
        if (*fit_cmd)
            code = cmd_fit(c, Q, gamma, delta, out);
        else if (*cv_cmd)
            code = cmd_cv(c, cvf, out);
        else if (*pred_cmd)
            code = cmd_predict(c, fit_file, out);
        else
            code = cmd_simulate(c, sf, out);
        if (code == kExitNonConvergence) err << "warning: solver did not converge; outputs were written\n";
        return code;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    }
}

}  // namespace mcen
