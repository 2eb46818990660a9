#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gexpect/errors.hpp"
#include "gexpect/expr.hpp"
#include "gexpect/path_ops.hpp"
#include "gexpect/sublinear.hpp"

namespace gexpect {

inline constexpr const char* kSchemaVersion = "1.0";

// ---------------------------------------------------------------------------
// covariance sets and problems
// ---------------------------------------------------------------------------

/// {"d": int, "matrices": [[[real]]]}. "d" is optional and cross-checked when
/// present; diagnostics name the offending matrix index.
inline CovarianceSet covariance_from_json(const nlohmann::json& doc) {
    if (!doc.is_object()) throw input_error("sigma_set: expected a JSON object");
    if (!doc.contains("matrices") || !doc["matrices"].is_array() || doc["matrices"].empty())
        throw input_error("sigma_set: \"matrices\" must be a nonempty array");
    std::vector<SymMatrix> mats;
    const auto& arr = doc["matrices"];
    for (std::size_t i = 0; i < arr.size(); ++i) {
        const auto& m = arr[i];
        std::ostringstream tag;
        tag << "matrices[" << i << "]";
        if (!m.is_array() || m.empty()) throw input_error(tag.str() + ": expected an array of rows");
        std::vector<std::vector<double>> rows;
        for (const auto& row : m) {
            if (!row.is_array()) throw input_error(tag.str() + ": each row must be an array");
            std::vector<double> r;
            for (const auto& v : row) {
                if (!v.is_number()) throw input_error(tag.str() + ": entries must be numbers");
                r.push_back(v.get<double>());
            }
            rows.push_back(std::move(r));
        }
        try {
            mats.push_back(SymMatrix::from_rows(rows));
        } catch (const input_error& e) {
            throw input_error(tag.str() + ": " + e.what());
        }
    }
    CovarianceSet set = CovarianceSet::create(std::move(mats));
    if (doc.contains("d")) {
        if (!doc["d"].is_number_integer() ||
            doc["d"].get<std::int64_t>() != static_cast<std::int64_t>(set.dimension()))
            throw input_error("sigma_set: \"d\" does not match the matrix dimension " +
                              std::to_string(set.dimension()));
    }
    return set;
}

inline nlohmann::json covariance_to_json(const CovarianceSet& set) {
    nlohmann::json doc;
    doc["d"] = set.dimension();
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& m : set.matrices()) {
        nlohmann::json rows = nlohmann::json::array();
        for (std::size_t i = 0; i < m.dim(); ++i) {
            nlohmann::json row = nlohmann::json::array();
            for (std::size_t j = 0; j < m.dim(); ++j) row.push_back(m(i, j));
            rows.push_back(std::move(row));
        }
        arr.push_back(std::move(rows));
    }
    doc["matrices"] = std::move(arr);
    return doc;
}

struct McSettings {
    std::int64_t paths = 100000;
    std::optional<std::uint64_t> seed;
};

/// One experiment: {"sigma_set": {...}, "times": [...], "payoff": "<expr>",
/// "p": real, "mc": {"paths": int, "seed": int}}. Only sigma_set is mandatory;
/// each command checks for the fields it needs.
struct Problem {
    CovarianceSet sigma_set;
    std::vector<double> times;
    std::optional<FunctionalSpec> payoff;
    std::optional<double> p;
    McSettings mc;
    nlohmann::json raw;
};

inline Problem problem_from_json(const nlohmann::json& doc) {
    if (!doc.is_object()) throw input_error("problem: expected a JSON object");
    if (!doc.contains("sigma_set")) throw input_error("problem: missing \"sigma_set\"");
    Problem pb{covariance_from_json(doc["sigma_set"]), {}, {}, {}, {}, doc};
    if (doc.contains("times")) {
        if (!doc["times"].is_array() || doc["times"].empty())
            throw input_error("problem: \"times\" must be a nonempty array");
        double prev = 0.0;
        for (const auto& v : doc["times"]) {
            if (!v.is_number()) throw input_error("problem: \"times\" entries must be numbers");
            const double t = v.get<double>();
            if (!(t > prev))
                throw input_error("problem: \"times\" must be strictly increasing and positive");
            pb.times.push_back(t);
            prev = t;
        }
    }
    if (doc.contains("payoff")) {
        if (!doc["payoff"].is_string()) throw input_error("problem: \"payoff\" must be a string");
        if (pb.times.empty()) throw input_error("problem: \"payoff\" requires \"times\"");
        pb.payoff =
            parse_functional(doc["payoff"].get<std::string>(), pb.times.size(), pb.sigma_set.dimension());
    }
    if (doc.contains("p")) {
        if (!doc["p"].is_number()) throw input_error("problem: \"p\" must be a number");
        pb.p = doc["p"].get<double>();
    }
    if (doc.contains("mc")) {
        const auto& mc = doc["mc"];
        if (!mc.is_object()) throw input_error("problem: \"mc\" must be an object");
        if (mc.contains("paths")) {
            if (!mc["paths"].is_number_integer() || mc["paths"].get<std::int64_t>() < 1)
                throw input_error("problem: \"mc.paths\" must be a positive integer");
            pb.mc.paths = mc["paths"].get<std::int64_t>();
        }
        if (mc.contains("seed")) {
            if (!mc["seed"].is_number_integer() || mc["seed"].get<std::int64_t>() < 0)
                throw input_error("problem: \"mc.seed\" must be a nonnegative integer");
            pb.mc.seed = mc["seed"].get<std::uint64_t>();
        }
    }
    return pb;
}

inline nlohmann::json parse_json_text(const std::string& text, const std::string& what) {
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw input_error(what + ": " + e.what());
    }
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw input_error("cannot open file: " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

inline Problem load_problem(const std::string& path) {
    return problem_from_json(parse_json_text(read_text_file(path), "problem file " + path));
}

// ---------------------------------------------------------------------------
// result envelope
// ---------------------------------------------------------------------------

inline std::string config_hash_hex(const nlohmann::json& effective_config) {
    const std::string bytes = effective_config.dump();
    const std::uint64_t h = detail::fnv1a64(std::span<const std::uint8_t>(
        reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()));
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

/// Reproducibility metadata carried by every result record. No timestamps:
/// identical (config, seed) must serialize byte-identically.
inline nlohmann::json result_meta(const std::string& command, const nlohmann::json& effective_config,
                                  std::uint64_t seed) {
    nlohmann::json meta;
    meta["command"] = command;
    meta["config_hash"] = config_hash_hex(effective_config);
    meta["seed"] = seed;
    meta["version"] = kSchemaVersion;
    return meta;
}

// ---------------------------------------------------------------------------
// CSV (RFC 4180)
// ---------------------------------------------------------------------------

inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        out += c;
        if (c == '"') out += '"';
    }
    out += '"';
    return out;
}

inline std::string csv_row(const std::vector<std::string>& fields) {
    std::string out;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out += ',';
        out += csv_field(fields[i]);
    }
    out += "\r\n";
    return out;
}

/// Shortest round-trip decimal form, same as the expression printer.
inline std::string format_value(double v) { return detail::format_number(v); }

inline std::string path_to_csv(const DiscretePath& p) {
    std::vector<std::string> header{"t"};
    for (std::size_t j = 1; j <= p.dim; ++j) header.push_back("x_" + std::to_string(j));
    std::string out = csv_row(header);
    for (std::size_t k = 0; k < p.nodes(); ++k) {
        std::vector<std::string> row{format_value(p.times[k])};
        for (std::size_t j = 0; j < p.dim; ++j) row.push_back(format_value(p.node(k, j)));
        out += csv_row(row);
    }
    return out;
}

inline DiscretePath path_from_csv(const std::string& text) {
    std::vector<double> times, values;
    std::size_t dim = 0;
    std::istringstream in(text);
    std::string line;
    bool first = true;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        ++lineno;
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream ls(line);
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (first && !cells.empty() && cells[0] == "t") {
            first = false;
            continue;
        }
        first = false;
        if (cells.size() < 2) throw input_error("path CSV: each row needs t and at least one x");
        if (dim == 0)
            dim = cells.size() - 1;
        else if (cells.size() - 1 != dim)
            throw input_error("path CSV: inconsistent column count");
        try {
            times.push_back(std::stod(cells[0]));
            for (std::size_t j = 1; j < cells.size(); ++j) values.push_back(std::stod(cells[j]));
        } catch (const std::exception&) {
            throw input_error("path CSV: non-numeric cell in row " + std::to_string(lineno));
        }
    }
    if (times.size() < 2) throw input_error("path CSV: need at least 2 rows");
    return DiscretePath::create(std::move(times), std::move(values), dim);
}

// ---------------------------------------------------------------------------
// atomic output
// ---------------------------------------------------------------------------

inline void atomic_write(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw evaluation_error("cannot open output file: " + tmp);
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw evaluation_error("short write to " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw evaluation_error("cannot rename " + tmp + " to " + path);
}

} // namespace gexpect
