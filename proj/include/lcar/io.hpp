#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lcar/adjacency.hpp"
#include "lcar/elicitation.hpp"
#include "lcar/errors.hpp"
#include "lcar/model.hpp"
#include "lcar/sampler.hpp"
#include "lcar/util.hpp"

namespace lcar {

// ============================================================
// Plain CSV
// ============================================================

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name, const std::string& path) const {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (header[i] == name) return static_cast<int>(i);
        }
        throw ParseError(path + ": missing column '" + name + "'");
    }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) {
        while (!field.empty() && (field.back() == '\r' || field.back() == ' ')) field.pop_back();
        std::size_t start = 0;
        while (start < field.size() && field[start] == ' ') ++start;
        fields.push_back(field.substr(start));
    }
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

inline CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path + ": cannot open file");
    CsvTable table;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        auto fields = split_csv_line(line);
        if (line_no == 1) {
            table.header = std::move(fields);
            continue;
        }
        if (fields.size() != table.header.size()) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": expected " +
                             std::to_string(table.header.size()) + " fields, found " +
                             std::to_string(fields.size()));
        }
        table.rows.push_back(std::move(fields));
    }
    if (table.header.empty()) throw ParseError(path + ": empty file");
    return table;
}

inline double parse_double(const std::string& field, const std::string& path, std::size_t row) {
    try {
        std::size_t used = 0;
        const double v = std::stod(field, &used);
        if (used != field.size()) throw std::invalid_argument(field);
        return v;
    } catch (const std::exception&) {
        throw ParseError(path + ":" + std::to_string(row + 2) + ": cannot parse number '" +
                         field + "'");
    }
}

inline long parse_long(const std::string& field, const std::string& path, std::size_t row) {
    try {
        std::size_t used = 0;
        const long v = std::stol(field, &used);
        if (used != field.size()) throw std::invalid_argument(field);
        return v;
    } catch (const std::exception&) {
        throw ParseError(path + ":" + std::to_string(row + 2) + ": cannot parse integer '" +
                         field + "'");
    }
}

/// Shortest round-trippable decimal form; keeps rerun outputs bit-identical.
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline void write_text_file(const std::string& path, const std::string& content) {
    std::filesystem::create_directories(std::filesystem::path(path).parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError(path + ": cannot open for writing");
    out << content;
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(path + ": cannot open file");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::string file_hash_hex(const std::string& path) {
    const std::string bytes = read_text_file(path);
    return hash_hex(fnv1a64(bytes.data(), bytes.size()));
}

// ============================================================
// Ingestion
// ============================================================

struct Standardisation {
    std::vector<std::string> names;
    Eigen::VectorXd means;
    Eigen::VectorXd sds;
};

struct IngestedDataset {
    Dataset data;
    Standardisation standardisation;
};

namespace detail {

// Rows must cover units 1..n exactly once; returns the row index per unit.
inline std::vector<std::size_t> unit_order(const CsvTable& table, int unit_col,
                                           const std::string& path) {
    const auto n = table.rows.size();
    std::vector<std::size_t> order(n, SIZE_MAX);
    for (std::size_t r = 0; r < n; ++r) {
        const long unit = parse_long(table.rows[r][static_cast<std::size_t>(unit_col)], path, r);
        if (unit < 1 || static_cast<std::size_t>(unit) > n) {
            throw InconsistentUnits(path + ": unit " + std::to_string(unit) +
                                    " outside 1.." + std::to_string(n));
        }
        if (order[static_cast<std::size_t>(unit - 1)] != SIZE_MAX) {
            throw InconsistentUnits(path + ": unit " + std::to_string(unit) + " appears twice");
        }
        order[static_cast<std::size_t>(unit - 1)] = r;
    }
    return order;
}

inline void standardise_columns(Eigen::MatrixXd& x, Standardisation& std_out) {
    const auto p = x.cols() - 1;  // intercept untouched
    std_out.means.resize(p);
    std_out.sds.resize(p);
    for (Eigen::Index c = 1; c <= p; ++c) {
        const double mean = x.col(c).mean();
        double sd = std::sqrt((x.col(c).array() - mean).square().sum() /
                              static_cast<double>(x.rows() - 1));
        if (!(sd > 0.0)) {
            throw SingularDesign("covariate '" + std_out.names[static_cast<std::size_t>(c - 1)] +
                                 "' is constant");
        }
        x.col(c) = (x.col(c).array() - mean) / sd;
        std_out.means[c - 1] = mean;
        std_out.sds[c - 1] = sd;
    }
}

}  // namespace detail

/// Reads `unit,observed,expected,cov...`; covariates are standardised and
/// an intercept column is prepended.
inline IngestedDataset ingest_dataset(const std::string& path) {
    const CsvTable table = read_csv(path);
    const int unit_col = table.column("unit", path);
    const int obs_col = table.column("observed", path);
    const int exp_col = table.column("expected", path);
    const auto n = static_cast<Eigen::Index>(table.rows.size());
    if (n == 0) throw ParseError(path + ": no data rows");
    const auto order = detail::unit_order(table, unit_col, path);

    IngestedDataset out;
    out.data.y.resize(n);
    out.data.expected.resize(n);
    std::vector<int> cov_cols;
    for (std::size_t c = 0; c < table.header.size(); ++c) {
        const int ci = static_cast<int>(c);
        if (ci == unit_col || ci == obs_col || ci == exp_col) continue;
        cov_cols.push_back(ci);
        out.standardisation.names.push_back(table.header[c]);
    }
    out.data.X.resize(n, static_cast<Eigen::Index>(cov_cols.size()) + 1);
    out.data.X.col(0).setOnes();
    for (Eigen::Index k = 0; k < n; ++k) {
        const auto& row = table.rows[order[static_cast<std::size_t>(k)]];
        out.data.y[k] = static_cast<double>(
            parse_long(row[static_cast<std::size_t>(obs_col)], path, order[k]));
        out.data.expected[k] =
            parse_double(row[static_cast<std::size_t>(exp_col)], path, order[k]);
        for (std::size_t c = 0; c < cov_cols.size(); ++c) {
            out.data.X(k, static_cast<Eigen::Index>(c) + 1) =
                parse_double(row[static_cast<std::size_t>(cov_cols[c])], path, order[k]);
        }
    }
    out.data.covariate_names = out.standardisation.names;
    if (!cov_cols.empty()) detail::standardise_columns(out.data.X, out.standardisation);
    out.data.validate();
    return out;
}

/// Covariates only (`unit,<name>...`); `observed`/`expected` columns are
/// ignored so a full dataset file can be reused.
inline IngestedDataset ingest_covariates(const std::string& path) {
    const CsvTable table = read_csv(path);
    const int unit_col = table.column("unit", path);
    const auto n = static_cast<Eigen::Index>(table.rows.size());
    if (n == 0) throw ParseError(path + ": no data rows");
    const auto order = detail::unit_order(table, unit_col, path);

    IngestedDataset out;
    std::vector<int> cov_cols;
    for (std::size_t c = 0; c < table.header.size(); ++c) {
        if (static_cast<int>(c) == unit_col) continue;
        if (table.header[c] == "observed" || table.header[c] == "expected") continue;
        cov_cols.push_back(static_cast<int>(c));
        out.standardisation.names.push_back(table.header[c]);
    }
    out.data.X.resize(n, static_cast<Eigen::Index>(cov_cols.size()) + 1);
    out.data.X.col(0).setOnes();
    for (Eigen::Index k = 0; k < n; ++k) {
        const auto& row = table.rows[order[static_cast<std::size_t>(k)]];
        for (std::size_t c = 0; c < cov_cols.size(); ++c) {
            out.data.X(k, static_cast<Eigen::Index>(c) + 1) =
                parse_double(row[static_cast<std::size_t>(cov_cols[c])], path, order[k]);
        }
    }
    out.data.covariate_names = out.standardisation.names;
    if (!cov_cols.empty()) detail::standardise_columns(out.data.X, out.standardisation);
    return out;
}

/// Edge list `from,to`, 1-based, either orientation.
inline AdjacencyStructure ingest_adjacency(const std::string& path, int n) {
    const CsvTable table = read_csv(path);
    const int from_col = table.column("from", path);
    const int to_col = table.column("to", path);
    std::vector<std::pair<int, int>> pairs;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const long a = parse_long(table.rows[r][static_cast<std::size_t>(from_col)], path, r);
        const long b = parse_long(table.rows[r][static_cast<std::size_t>(to_col)], path, r);
        for (long u : {a, b}) {
            if (u < 1 || u > n) {
                throw InconsistentUnits(path + ":" + std::to_string(r + 2) + ": unit " +
                                        std::to_string(u) + " outside 1.." + std::to_string(n));
            }
        }
        pairs.emplace_back(static_cast<int>(a - 1), static_cast<int>(b - 1));
    }
    return AdjacencyStructure::from_edges(n, pairs);
}

/// One file per prior period, `unit,observed,expected`.
inline std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>> ingest_prior_counts(
    const std::vector<std::string>& paths, int n) {
    std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>> periods;
    for (const auto& path : paths) {
        const CsvTable table = read_csv(path);
        if (static_cast<int>(table.rows.size()) != n) {
            throw InconsistentUnits(path + ": has " + std::to_string(table.rows.size()) +
                                    " units, expected " + std::to_string(n));
        }
        const int unit_col = table.column("unit", path);
        const int obs_col = table.column("observed", path);
        const int exp_col = table.column("expected", path);
        const auto order = detail::unit_order(table, unit_col, path);
        Eigen::VectorXd y(n), e(n);
        for (int k = 0; k < n; ++k) {
            const auto& row = table.rows[order[static_cast<std::size_t>(k)]];
            y[k] = static_cast<double>(
                parse_long(row[static_cast<std::size_t>(obs_col)], path, order[k]));
            e[k] = parse_double(row[static_cast<std::size_t>(exp_col)], path, order[k]);
            if (!(e[k] > 0.0)) {
                throw NonPositiveExpected(path + ": expected count for unit " +
                                          std::to_string(k + 1) + " must be > 0");
            }
        }
        periods.emplace_back(std::move(y), std::move(e));
    }
    return periods;
}

// ============================================================
// Candidate sequence persistence
// ============================================================

/// Writes sequence.csv / sequence.json / trace.csv into `dir`.
inline void write_sequence(const std::string& dir, const CandidateSequence& seq,
                           const ElicitationTrace& trace, double epsilon) {
    std::filesystem::create_directories(dir);
    const AdjacencyStructure& adj = seq.base();

    std::ostringstream seq_csv;
    seq_csv << "step,edge_from,edge_to,loglik\n";
    for (std::size_t s = 0; s < trace.steps.size(); ++s) {
        const Edge& e = adj.edge(trace.steps[s].edge_index);
        seq_csv << (s + 1) << ',' << (e.a + 1) << ',' << (e.b + 1) << ','
                << format_double(trace.steps[s].loglik) << '\n';
    }
    write_text_file(dir + "/sequence.csv", seq_csv.str());

    nlohmann::json sidecar;
    sidecar["n"] = adj.n_units();
    sidecar["num_edges"] = adj.num_edges();
    sidecar["epsilon"] = epsilon;
    sidecar["adjacency_hash"] = adj.hash();
    write_text_file(dir + "/sequence.json", sidecar.dump(2) + "\n");

    std::ostringstream trace_csv;
    trace_csv << "step,edge_from,edge_to,loglik";
    if (!trace.steps.empty()) {
        for (Eigen::Index c = 0; c < trace.steps.front().beta_hat.size(); ++c) {
            trace_csv << ",beta_hat_" << c;
        }
    }
    trace_csv << ",tau2_hat\n";
    for (std::size_t s = 0; s < trace.steps.size(); ++s) {
        const auto& step = trace.steps[s];
        const Edge& e = adj.edge(step.edge_index);
        trace_csv << (s + 1) << ',' << (e.a + 1) << ',' << (e.b + 1) << ','
                  << format_double(step.loglik);
        for (Eigen::Index c = 0; c < step.beta_hat.size(); ++c) {
            trace_csv << ',' << format_double(step.beta_hat[c]);
        }
        trace_csv << ',' << format_double(step.tau2_hat) << '\n';
    }
    write_text_file(dir + "/trace.csv", trace_csv.str());
}

/// Loads a sequence written by write_sequence and checks it against the
/// supplied adjacency. Returns the sequence and the sidecar epsilon.
inline std::pair<CandidateSequence, double> read_sequence(
    const std::string& dir, std::shared_ptr<const AdjacencyStructure> adj) {
    const auto sidecar = nlohmann::json::parse(read_text_file(dir + "/sequence.json"));
    if (sidecar.at("adjacency_hash").get<std::string>() != adj->hash()) {
        throw InconsistentUnits(dir + ": sequence was elicited for a different adjacency");
    }
    if (sidecar.at("n").get<int>() != adj->n_units() ||
        sidecar.at("num_edges").get<int>() != adj->num_edges()) {
        throw InconsistentUnits(dir + ": sequence dimensions disagree with the adjacency");
    }

    std::map<std::pair<int, int>, int> edge_index;
    for (int e = 0; e < adj->num_edges(); ++e) {
        edge_index[{adj->edge(e).a, adj->edge(e).b}] = e;
    }
    const std::string path = dir + "/sequence.csv";
    const CsvTable table = read_csv(path);
    const int from_col = table.column("edge_from", path);
    const int to_col = table.column("edge_to", path);
    std::vector<int> order;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const int a =
            static_cast<int>(parse_long(table.rows[r][static_cast<std::size_t>(from_col)], path, r)) - 1;
        const int b =
            static_cast<int>(parse_long(table.rows[r][static_cast<std::size_t>(to_col)], path, r)) - 1;
        const auto it = edge_index.find({std::min(a, b), std::max(a, b)});
        if (it == edge_index.end()) {
            throw InconsistentUnits(path + ":" + std::to_string(r + 2) +
                                    ": edge not present in the adjacency");
        }
        order.push_back(it->second);
    }
    return {CandidateSequence(std::move(adj), std::move(order)),
            sidecar.at("epsilon").get<double>()};
}

// ============================================================
// Posterior sample persistence
// ============================================================

/// One CSV per chain plus a raw little-endian double matrix (kept x n) for
/// the bulk random-effect draws.
inline void write_chain(const std::string& dir, int chain_index, const ChainSamples& chain,
                        ModelKind kind, int thin) {
    std::ostringstream csv;
    csv << "iter";
    for (Eigen::Index c = 0; c < chain.beta.cols(); ++c) csv << ",beta" << c;
    csv << ",tau2";
    if (kind == ModelKind::Lcar) csv << ",phi_star,j";
    if (kind == ModelKind::Bym) csv << ",sigma2";
    csv << ",deviance\n";
    for (Eigen::Index i = 0; i < chain.beta.rows(); ++i) {
        csv << (static_cast<long>(i) + 1) * thin;
        for (Eigen::Index c = 0; c < chain.beta.cols(); ++c) {
            csv << ',' << format_double(chain.beta(i, c));
        }
        csv << ',' << format_double(chain.tau2[i]);
        if (kind == ModelKind::Lcar) {
            csv << ',' << format_double(chain.phi_star[i]) << ','
                << chain.candidate_j[static_cast<std::size_t>(i)];
        }
        if (kind == ModelKind::Bym) csv << ',' << format_double(chain.sigma2[i]);
        csv << ',' << format_double(chain.deviance[i]) << '\n';
    }
    write_text_file(dir + "/chain_" + std::to_string(chain_index + 1) + ".csv", csv.str());
}

inline void write_phi_matrix(const std::string& path, const Eigen::MatrixXd& phi) {
    std::filesystem::create_directories(std::filesystem::path(path).parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError(path + ": cannot open for writing");
    for (Eigen::Index i = 0; i < phi.rows(); ++i) {
        for (Eigen::Index j = 0; j < phi.cols(); ++j) {
            const double v = phi(i, j);
            out.write(reinterpret_cast<const char*>(&v), sizeof(v));
        }
    }
}

/// Reads chain CSVs back into a PosteriorSamples shell (no phi matrices).
inline PosteriorSamples read_chains(const std::string& dir, ModelKind kind, int n_units,
                                    int num_edges) {
    PosteriorSamples out;
    out.kind = kind;
    out.n_units = n_units;
    out.num_edges = num_edges;
    for (int c = 1;; ++c) {
        const std::string path = dir + "/chain_" + std::to_string(c) + ".csv";
        if (!std::filesystem::exists(path)) break;
        const CsvTable table = read_csv(path);
        ChainSamples chain;
        int p = 0;
        while (std::find(table.header.begin(), table.header.end(), "beta" + std::to_string(p)) !=
               table.header.end()) {
            ++p;
        }
        out.n_coefficients = p;
        const auto rows = static_cast<Eigen::Index>(table.rows.size());
        chain.beta.resize(rows, p);
        chain.tau2.resize(rows);
        chain.phi_star = Eigen::VectorXd::Zero(rows);
        chain.sigma2 = Eigen::VectorXd::Zero(rows);
        chain.deviance.resize(rows);
        chain.candidate_j.assign(static_cast<std::size_t>(rows), num_edges);
        const int tau_col = table.column("tau2", path);
        const int dev_col = table.column("deviance", path);
        for (Eigen::Index r = 0; r < rows; ++r) {
            const auto& row = table.rows[static_cast<std::size_t>(r)];
            for (int b = 0; b < p; ++b) {
                chain.beta(r, b) = parse_double(
                    row[static_cast<std::size_t>(table.column("beta" + std::to_string(b), path))],
                    path, static_cast<std::size_t>(r));
            }
            chain.tau2[r] = parse_double(row[static_cast<std::size_t>(tau_col)], path,
                                         static_cast<std::size_t>(r));
            chain.deviance[r] = parse_double(row[static_cast<std::size_t>(dev_col)], path,
                                             static_cast<std::size_t>(r));
            if (kind == ModelKind::Lcar) {
                chain.phi_star[r] =
                    parse_double(row[static_cast<std::size_t>(table.column("phi_star", path))],
                                 path, static_cast<std::size_t>(r));
                chain.candidate_j[static_cast<std::size_t>(r)] = static_cast<int>(
                    parse_long(row[static_cast<std::size_t>(table.column("j", path))], path,
                               static_cast<std::size_t>(r)));
            }
            if (kind == ModelKind::Bym) {
                chain.sigma2[r] =
                    parse_double(row[static_cast<std::size_t>(table.column("sigma2", path))],
                                 path, static_cast<std::size_t>(r));
            }
        }
        chain.beta_mean = chain.beta.colwise().mean();
        out.chains.push_back(std::move(chain));
    }
    if (out.chains.empty()) throw ParseError(dir + ": no chain files found");
    return out;
}

}  // namespace lcar
