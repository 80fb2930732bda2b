#include "credo/dataset_io.hpp"

#include <json.hpp>

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace credo::scm {

using nlohmann::json;

std::string format_double(double value) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, res.ptr);
}

std::string sidecar_path(const std::string& csv_path) {
    const std::size_t dot = csv_path.find_last_of('.');
    const std::size_t slash = csv_path.find_last_of('/');
    if (dot != std::string::npos && (slash == std::string::npos || dot > slash)) {
        return csv_path.substr(0, dot) + ".json";
    }
    return csv_path + ".json";
}

void write_dataset(const Dataset& dataset, const std::string& csv_path) {
    std::ofstream out(csv_path);
    if (!out) throw std::runtime_error("cannot write '" + csv_path + "'");

    std::string header;
    auto append = [&](const char* prefix, Eigen::Index count) {
        for (Eigen::Index k = 0; k < count; ++k) {
            if (!header.empty()) header += ",";
            header += prefix + std::to_string(k);
        }
    };
    append("g", dataset.factors.cols());
    append("c", dataset.confounders.cols());
    append("x", dataset.observations.cols());
    out << header << "\n";

    for (long r = 0; r < dataset.n; ++r) {
        std::string line;
        auto emit = [&](double v) {
            if (!line.empty()) line += ",";
            line += format_double(v);
        };
        for (Eigen::Index k = 0; k < dataset.factors.cols(); ++k) emit(dataset.factors(r, k));
        for (Eigen::Index k = 0; k < dataset.confounders.cols(); ++k)
            emit(dataset.confounders(r, k));
        for (Eigen::Index k = 0; k < dataset.observations.cols(); ++k)
            emit(dataset.observations(r, k));
        out << line << "\n";
    }
    out.close();
    if (!out) throw std::runtime_error("write failed for '" + csv_path + "'");

    json meta;
    meta["graph_name"] = dataset.graph_name;
    meta["seed"] = dataset.seed;
    meta["n"] = dataset.n;
    meta["intervention"] = dataset.intervention;
    std::ofstream side(sidecar_path(csv_path));
    if (!side) throw std::runtime_error("cannot write '" + sidecar_path(csv_path) + "'");
    side << meta.dump(2) << "\n";
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    return fields;
}

[[noreturn]] void row_error(long line_number, const std::string& what) {
    throw std::runtime_error("csv line " + std::to_string(line_number) + ": " + what);
}

double parse_double(const std::string& field, long line_number) {
    double value = 0.0;
    const char* begin = field.data();
    const char* end = begin + field.size();
    auto res = std::from_chars(begin, end, value);
    if (res.ec != std::errc() || res.ptr != end) {
        row_error(line_number, "cannot parse number '" + field + "'");
    }
    return value;
}

}  // namespace

Dataset read_dataset(const std::string& csv_path) {
    std::ifstream side(sidecar_path(csv_path));
    if (!side) {
        throw std::runtime_error("metadata required: missing sidecar '" + sidecar_path(csv_path) +
                                 "'");
    }
    json meta;
    try {
        side >> meta;
    } catch (const json::exception& e) {
        throw std::runtime_error("sidecar '" + sidecar_path(csv_path) + "': " + e.what());
    }

    std::ifstream in(csv_path);
    if (!in) throw std::runtime_error("cannot read '" + csv_path + "'");

    std::string header_line;
    if (!std::getline(in, header_line)) throw std::runtime_error("empty csv '" + csv_path + "'");
    Eigen::Index nf = 0, nc = 0, nx = 0;
    for (const std::string& col : split_csv_line(header_line)) {
        if (col.empty()) row_error(1, "empty column name");
        const char prefix = col[0];
        Eigen::Index* counter = prefix == 'g' ? &nf : prefix == 'c' ? &nc : prefix == 'x' ? &nx : nullptr;
        if (!counter || col.substr(1) != std::to_string(*counter)) {
            row_error(1, "malformed header column '" + col + "'");
        }
        ++*counter;
    }

    const long n = meta.at("n").get<long>();
    Dataset ds;
    ds.graph_name = meta.at("graph_name").get<std::string>();
    ds.seed = meta.at("seed").get<std::uint64_t>();
    ds.intervention = meta.at("intervention").get<std::string>();
    ds.n = n;
    ds.factors.resize(n, nf);
    ds.confounders.resize(n, nc);
    ds.observations.resize(n, nx);
    for (Eigen::Index k = 0; k < nf; ++k) ds.factor_names.push_back("g" + std::to_string(k));
    for (Eigen::Index k = 0; k < nc; ++k) ds.confounder_names.push_back("c" + std::to_string(k));

    const Eigen::Index width = nf + nc + nx;
    std::string line;
    long row = 0;
    while (std::getline(in, line)) {
        if (line.empty() && row == n) break;  // trailing newline
        const long line_number = row + 2;
        if (row >= n) row_error(line_number, "more rows than sidecar n=" + std::to_string(n));
        auto fields = split_csv_line(line);
        if (static_cast<Eigen::Index>(fields.size()) != width) {
            row_error(line_number, "expected " + std::to_string(width) + " fields, found " +
                                       std::to_string(fields.size()));
        }
        Eigen::Index k = 0;
        for (Eigen::Index f = 0; f < nf; ++f)
            ds.factors(row, f) = parse_double(fields[static_cast<std::size_t>(k++)], line_number);
        for (Eigen::Index c = 0; c < nc; ++c)
            ds.confounders(row, c) = parse_double(fields[static_cast<std::size_t>(k++)], line_number);
        for (Eigen::Index x = 0; x < nx; ++x)
            ds.observations(row, x) = parse_double(fields[static_cast<std::size_t>(k++)], line_number);
        ++row;
    }
    if (row != n) {
        throw std::runtime_error("csv truncated: sidecar says n=" + std::to_string(n) +
                                 " but last good line is " + std::to_string(row + 1));
    }
    return ds;
}

}  // namespace credo::scm
