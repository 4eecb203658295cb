#include "nelsonlab/io.hpp"

#include <charconv>
#include <fstream>
#include <stdexcept>

namespace nelsonlab {

std::uint64_t fnv1a64(std::string_view data) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i, v >>= 4) s[std::size_t(i)] = digits[v & 0xf];
    return s;
}

std::string format_number(double v) {
    if (v == 0.0) return "0"; // also folds -0
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    if (r.ec != std::errc()) throw std::runtime_error("format_number: conversion failed");
    return std::string(buf, r.ptr);
}

std::string format_number(long long v) { return std::to_string(v); }

void CsvTable::add(std::vector<std::string> row) {
    if (row.size() != header.size()) throw std::logic_error("csv row width does not match the header");
    rows.push_back(std::move(row));
}

namespace {

std::string quote(const std::string& f) {
    if (f.find_first_of(",\"\n") == std::string::npos) return f;
    std::string q = "\"";
    for (char c : f) {
        if (c == '"') q += '"';
        q += c;
    }
    return q + "\"";
}

void append_row(std::string& out, const std::vector<std::string>& row) {
    for (std::size_t i = 0; i < row.size(); ++i) {
        if (i) out += ',';
        out += quote(row[i]);
    }
    out += '\n';
}

std::string occupation_string(const OccupationBasis& b, std::size_t i) {
    std::string s;
    const auto n = b.occupation(i);
    for (std::size_t j = 0; j < n.size(); ++j) {
        if (j) s += ';';
        s += std::to_string(n[j]);
    }
    return s;
}

} // namespace

std::string render_csv(const CsvTable& t, const std::string& config_hash) {
    std::string out = "# config_hash: " + config_hash + "\n";
    append_row(out, t.header);
    for (const auto& r : t.rows) append_row(out, r);
    return out;
}

void write_csv(const std::filesystem::path& path, const CsvTable& t, const std::string& config_hash) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << render_csv(t, config_hash);
}

std::string csv_body(const std::string& rendered) {
    if (rendered.rfind("# ", 0) != 0) return rendered;
    const auto nl = rendered.find('\n');
    return nl == std::string::npos ? std::string() : rendered.substr(nl + 1);
}

CsvTable basis_table(const OccupationBasis& basis) {
    CsvTable t{{"index", "occupation", "N", "energy"}, {}};
    for (std::size_t i = 0; i < basis.size(); ++i)
        t.add({format_number((long long)i), occupation_string(basis, i), format_number((long long)basis.total(i)),
               format_number(basis.energy(i))});
    return t;
}

CsvTable tensor_basis_table(const TensorBasis& tb) {
    CsvTable t{{"index", "left", "right"}, {}};
    for (std::size_t i = 0; i < tb.size(); ++i) {
        const auto [l, r] = tb.pair(i);
        t.add({format_number((long long)i), occupation_string(tb.left(), l), occupation_string(tb.right(), r)});
    }
    return t;
}

CsvTable operator_table(const SparseOperator& op) {
    CsvTable t{{"row", "col", "re", "im"}, {}};
    for (Eigen::Index r = 0; r < op.m.outerSize(); ++r)
        for (SpMat::InnerIterator it(op.m, r); it; ++it)
            t.add({format_number((long long)it.row()), format_number((long long)it.col()),
                   format_number(it.value().real()), format_number(it.value().imag())});
    return t;
}

CsvTable track_table(const Track& tr) {
    CsvTable t{{"t", "value", "running", "norm_drift", "energy_drift"}, {}};
    for (const auto& r : tr.rows)
        t.add({format_number(r.t), format_number(r.value), format_number(r.running), format_number(r.norm_drift),
               format_number(r.energy_drift)});
    return t;
}

} // namespace nelsonlab
