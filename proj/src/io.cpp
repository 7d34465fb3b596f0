#include "mcen/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace mcen {

namespace {

// RFC-4180 record splitter: quoted fields may contain commas and doubled quotes.
std::vector<std::string> split_record(const std::string& line, const std::string& where) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (quoted) throw Error(ErrorKind::ParseError, where + ": unterminated quote");
    out.push_back(cur);
    return out;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return "";
    return s.substr(b, s.find_last_not_of(" \t") - b + 1);
}

double parse_number(const std::string& raw, const std::string& where) {
    const std::string s = trim(raw);
    if (s.empty()) throw Error(ErrorKind::ParseError, where + ": missing value");
    double v = 0.0;
    const char* first = s.data();
    if (*first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v))
        throw Error(ErrorKind::ParseError, where + ": not a finite number: '" + s + "'");
    return v;
}

Json matrix_json(const Matrix& M) {
    Json values = Json::array();
    for (Index k = 0; k < M.cols(); ++k)
        for (Index i = 0; i < M.rows(); ++i) values.push_back(M(i, k));
    return Json{{"rows", M.rows()}, {"cols", M.cols()}, {"values", values}};
}

Matrix matrix_from_json(const Json& j) {
    const Index rows = j.at("rows").get<Index>(), cols = j.at("cols").get<Index>();
    const Json& v = j.at("values");
    if (rows < 0 || cols < 0 || static_cast<Index>(v.size()) != rows * cols)
        throw Error(ErrorKind::ParseError, "matrix value count does not match its shape");
    Matrix M(rows, cols);
    Index t = 0;
    for (Index k = 0; k < cols; ++k)
        for (Index i = 0; i < rows; ++i) M(i, k) = v[static_cast<std::size_t>(t++)].get<double>();
    return M;
}

Json vector_json(const Vector& v) { return Json(std::vector<double>(v.data(), v.data() + v.size())); }

Vector vector_from_json(const Json& j) {
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
}

Json partition_json(const ClusterPartition& D) {
    Json a = Json::array();
    for (int l : D.assignments()) a.push_back(l + 1);
    return a;
}

ClusterPartition partition_from_json(const Json& a, int Q) {
    std::vector<int> labels;
    for (const Json& l : a) labels.push_back(l.get<int>() - 1);
    return ClusterPartition(labels, Q);
}

TuningTriple triple_from_json(const Json& j) {
    return {j.at("Q").get<int>(), j.at("gamma").get<double>(), j.at("delta").get<double>()};
}

template <class F>
auto wrap_json_errors(F&& f) {
    try {
        return f();
    } catch (const Json::exception& e) {
        throw Error(ErrorKind::ParseError, std::string("fit document: ") + e.what());
    }
}

}  // namespace

Index Table::column(const std::string& name) const {
    for (std::size_t j = 0; j < header.size(); ++j)
        if (header[j] == name) return static_cast<Index>(j);
    throw Error(ErrorKind::ParseError, "column '" + name + "' not found");
}

Matrix Table::columns(const std::vector<std::string>& names) const {
    Matrix M(values.rows(), static_cast<Index>(names.size()));
    for (std::size_t j = 0; j < names.size(); ++j) M.col(static_cast<Index>(j)) = values.col(column(names[j]));
    return M;
}

Table parse_csv(std::istream& in, const std::string& source) {
    Table t;
    std::vector<std::vector<double>> rows;
    std::string line;
    long lineno = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const std::string where = source + ":" + std::to_string(lineno);
        auto fields = split_record(line, where);
        if (!have_header) {
            for (auto& f : fields) t.header.push_back(trim(f));
            for (std::size_t a = 0; a < t.header.size(); ++a) {
                if (t.header[a].empty()) throw Error(ErrorKind::ParseError, where + ": empty column name");
                for (std::size_t b = 0; b < a; ++b)
                    if (t.header[a] == t.header[b])
                        throw Error(ErrorKind::ParseError, where + ": duplicate column '" + t.header[a] + "'");
            }
            have_header = true;
            continue;
        }
        if (fields.size() != t.header.size())
            throw Error(ErrorKind::ParseError, where + ": expected " + std::to_string(t.header.size()) +
                                                   " fields, found " + std::to_string(fields.size()));
        std::vector<double> row;
        for (std::size_t j = 0; j < fields.size(); ++j)
            row.push_back(parse_number(fields[j], where + " column '" + t.header[j] + "'"));
        rows.push_back(std::move(row));
    }
    if (!have_header) throw Error(ErrorKind::ParseError, source + ": missing header row");
    t.values.resize(static_cast<Index>(rows.size()), static_cast<Index>(t.header.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j)
            t.values(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
    return t;
}

Table read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::ParseError, "cannot open '" + path + "'");
    return parse_csv(in, path);
}

std::string format_double(double v) {
    if (std::isnan(v)) return "NaN";
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + '"';
}

void write_csv(std::ostream& out, const Json& manifest, const std::vector<std::string>& header,
               const Matrix& values) {
    out << "# " << manifest.dump() << '\n';
    for (std::size_t j = 0; j < header.size(); ++j) out << (j ? "," : "") << csv_field(header[j]);
    out << '\n';
    for (Index i = 0; i < values.rows(); ++i) {
        for (Index j = 0; j < values.cols(); ++j) out << (j ? "," : "") << format_double(values(i, j));
        out << '\n';
    }
}

std::vector<std::string> split_list(const std::string& text, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, sep)) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

Json to_json(const Standardizer& s) {
    return Json{{"x_center", vector_json(s.x_center)},
                {"x_scale", vector_json(s.x_scale)},
                {"y_center", vector_json(s.y_center)},
                {"y_scale", vector_json(s.y_scale)}};
}

Standardizer standardizer_from_json(const Json& j) {
    Standardizer s;
    s.x_center = vector_from_json(j.at("x_center"));
    s.x_scale = vector_from_json(j.at("x_scale"));
    s.y_center = vector_from_json(j.at("y_center"));
    s.y_scale = vector_from_json(j.at("y_scale"));
    if (s.x_center.size() != s.x_scale.size() || s.y_center.size() != s.y_scale.size())
        throw Error(ErrorKind::ParseError, "standardizer vectors disagree in length");
    return s;
}

Json to_json(const TuningTriple& t) { return Json{{"Q", t.Q}, {"gamma", t.gamma}, {"delta", t.delta}}; }

Json to_json(const McenFit& f) {
    return Json{{"kind", "gaussian"},
                {"coefficients", matrix_json(f.B_hat.values)},
                {"assignments", partition_json(f.D_hat)},
                {"Q", f.D_hat.Q()},
                {"triple", to_json(f.triple)},
                {"standardizer", to_json(f.standardizer)},
                {"objective_trace", f.objective_trace},
                {"seed", f.seed},
                {"outer_iters", f.outer_iters},
                {"flags",
                 {{"converged", f.converged},
                  {"solver_converged", f.solver_converged},
                  {"cycle_detected", f.cycle_detected},
                  {"all_zero_init", f.all_zero_init},
                  {"degenerate_clusters", f.degenerate_clusters},
                  {"known_partition", f.known_partition}}}};
}

Json to_json(const BinomialFit& f) {
    return Json{{"kind", "binomial"},
                {"coefficients", matrix_json(f.Theta_hat.values)},
                {"assignments", partition_json(f.D_hat)},
                {"Q", f.D_hat.Q()},
                {"triple", to_json(f.triple)},
                {"standardizer", to_json(f.standardizer)},
                {"nll_trace", f.nll_trace},
                {"seed", f.seed},
                {"outer_iters", f.outer_iters},
                {"flags",
                 {{"converged", f.converged},
                  {"solver_converged", f.solver_converged},
                  {"cycle_detected", f.cycle_detected},
                  {"degenerate_clusters", f.degenerate_clusters},
                  {"known_partition", f.known_partition}}}};
}

ResponseKind fit_kind(const Json& j) {
    const auto it = j.find("kind");
    if (it == j.end() || !it->is_string()) throw Error(ErrorKind::ParseError, "fit document lacks a kind");
    return response_kind_from_string(it->get<std::string>());
}

McenFit gaussian_fit_from_json(const Json& j) {
    return wrap_json_errors([&] {
        if (fit_kind(j) != ResponseKind::gaussian) throw Error(ErrorKind::ParseError, "not a gaussian fit");
        McenFit f;
        f.B_hat.values = matrix_from_json(j.at("coefficients"));
        f.D_hat = partition_from_json(j.at("assignments"), j.at("Q").get<int>());
        f.triple = triple_from_json(j.at("triple"));
        f.standardizer = standardizer_from_json(j.at("standardizer"));
        f.objective_trace = j.at("objective_trace").get<std::vector<double>>();
        f.seed = j.at("seed").get<std::uint64_t>();
        f.outer_iters = j.at("outer_iters").get<int>();
        const Json& fl = j.at("flags");
        f.converged = fl.at("converged").get<bool>();
        f.solver_converged = fl.at("solver_converged").get<bool>();
        f.cycle_detected = fl.at("cycle_detected").get<bool>();
        f.all_zero_init = fl.at("all_zero_init").get<bool>();
        f.degenerate_clusters = fl.at("degenerate_clusters").get<bool>();
        f.known_partition = fl.at("known_partition").get<bool>();
        if (f.B_hat.values.rows() != f.standardizer.x_scale.size() ||
            f.B_hat.values.cols() != f.standardizer.y_scale.size() || f.D_hat.r() != f.B_hat.values.cols())
            throw Error(ErrorKind::ParseError, "fit document shapes disagree");
        return f;
    });
}

BinomialFit binomial_fit_from_json(const Json& j) {
    return wrap_json_errors([&] {
        if (fit_kind(j) != ResponseKind::binomial) throw Error(ErrorKind::ParseError, "not a binomial fit");
        BinomialFit f;
        f.Theta_hat.values = matrix_from_json(j.at("coefficients"));
        f.Theta_hat.has_intercept_row = true;
        f.D_hat = partition_from_json(j.at("assignments"), j.at("Q").get<int>());
        f.triple = triple_from_json(j.at("triple"));
        f.standardizer = standardizer_from_json(j.at("standardizer"));
        f.nll_trace = j.at("nll_trace").get<std::vector<double>>();
        f.seed = j.at("seed").get<std::uint64_t>();
        f.outer_iters = j.at("outer_iters").get<int>();
        const Json& fl = j.at("flags");
        f.converged = fl.at("converged").get<bool>();
        f.solver_converged = fl.at("solver_converged").get<bool>();
        f.cycle_detected = fl.at("cycle_detected").get<bool>();
        f.degenerate_clusters = fl.at("degenerate_clusters").get<bool>();
        f.known_partition = fl.at("known_partition").get<bool>();
        if (f.Theta_hat.values.rows() != f.standardizer.x_scale.size() + 1 ||
            f.D_hat.r() != f.Theta_hat.values.cols())
            throw Error(ErrorKind::ParseError, "fit document shapes disagree");
        return f;
    });
}

std::vector<std::string> cv_header() { return {"Q", "gamma", "delta", "fold", "criterion"}; }

Matrix cv_rows(const CvResult& res) {
    Matrix M(static_cast<Index>(res.records.size()), 5);
    for (std::size_t i = 0; i < res.records.size(); ++i) {
        const CvRecord& r = res.records[i];
        M.row(static_cast<Index>(i)) << r.triple.Q, r.triple.gamma, r.triple.delta, r.fold + 1,
            r.valid ? r.criterion : std::numeric_limits<double>::quiet_NaN();
    }
    return M;
}

void write_sim_csv(std::ostream& out, const Json& manifest, const SimResult& res) {
    out << "# " << manifest.dump() << '\n' << "method,replication,metric,value\n";
    for (const MetricRecord& r : res.records)
        out << to_string(r.method) << ',' << r.replication + 1 << ',' << r.metric << ','
            << format_double(r.value) << '\n';
}

Json summary_json(const SimResult& res) {
    Json methods = Json::object();
    for (const auto& [method, metrics] : res.summary()) {
        Json m = Json::object();
        for (const auto& [metric, s] : metrics)
            m[metric] = {{"q1", s.q1}, {"median", s.median}, {"q3", s.q3}, {"mean", s.mean}, {"count", s.count}};
        methods[method] = m;
    }
    Json failures = Json::array();
    for (const ReplicationFailure& f : res.failures)
        failures.push_back({{"method", to_string(f.method)}, {"replication", f.replication + 1}, {"message", f.message}});
    return Json{{"summary", methods}, {"failures", failures}};
}

Json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::ParseError, "cannot open '" + path + "'");
    try {
        return Json::parse(in);
    } catch (const Json::exception& e) {
        throw Error(ErrorKind::ParseError, path + ": " + e.what());
    }
}

void write_text(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::ParseError, "cannot write '" + path + "'");
    out << content;
}

}  // namespace mcen
