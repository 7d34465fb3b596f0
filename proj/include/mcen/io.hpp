#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "mcen/binomial.hpp"
#include "mcen/mcen_gaussian.hpp"
#include "mcen/model_selection.hpp"
#include "mcen/simulation.hpp"

namespace mcen {

using Json = nlohmann::ordered_json;

/// Numeric table with a required header row. Lines starting with '#' are
/// skipped; empty or non-numeric cells are ParseErrors (no imputation).
struct Table {
    std::vector<std::string> header;
    Matrix values;

    Index column(const std::string& name) const;  // ParseError naming the column if absent
    Matrix columns(const std::vector<std::string>& names) const;
};

Table parse_csv(std::istream& in, const std::string& source = "input");
Table read_csv(const std::string& path);

/// Shortest text that parses back to the same double.
std::string format_double(double v);

/// Quotes a CSV field when it contains a comma, quote or newline.
std::string csv_field(const std::string& s);

/// Writes `manifest` as '#'-prefixed comment lines, then header and rows.
void write_csv(std::ostream& out, const Json& manifest, const std::vector<std::string>& header,
               const Matrix& values);

std::vector<std::string> split_list(const std::string& text, char sep = ',');

Json to_json(const Standardizer& s);
Standardizer standardizer_from_json(const Json& j);

/// Fit documents carry "kind"; coefficients are a dense column-major list and
/// assignments are 1-based.
Json to_json(const McenFit& fit);
Json to_json(const BinomialFit& fit);
McenFit gaussian_fit_from_json(const Json& j);
BinomialFit binomial_fit_from_json(const Json& j);
ResponseKind fit_kind(const Json& j);

Json to_json(const TuningTriple& t);

/// CV table rows: Q, gamma, delta, fold, criterion (NaN for failed cells).
std::vector<std::string> cv_header();
Matrix cv_rows(const CvResult& res);

/// Results rows: method, replication, metric, value.
void write_sim_csv(std::ostream& out, const Json& manifest, const SimResult& res);
Json summary_json(const SimResult& res);

Json read_json(const std::string& path);
void write_text(const std::string& path, const std::string& content);

}  // namespace mcen
