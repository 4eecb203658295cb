// Deterministic CSV artifacts and the config hash stamped into every file.
#pragma once

#include "nelsonlab/dynamics.hpp"
#include "nelsonlab/split.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace nelsonlab {

std::uint64_t fnv1a64(std::string_view data);
std::string hex64(std::uint64_t v);

// Shortest round-trip decimal representation ('.' decimal point, no locale).
std::string format_number(double v);
std::string format_number(long long v);

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    void add(std::vector<std::string> row);
};

// First line "# config_hash: <hex>", then the header, then the rows (LF line ends).
std::string render_csv(const CsvTable& t, const std::string& config_hash);
void write_csv(const std::filesystem::path& path, const CsvTable& t, const std::string& config_hash);
// Everything after the hash line.
std::string csv_body(const std::string& rendered);

// (index, occupation, N, energy); occupation joined by ';'.
CsvTable basis_table(const OccupationBasis& basis);
// (index, left occupation, right occupation).
CsvTable tensor_basis_table(const TensorBasis& tb);
// (row, col, re, im) in row-major order.
CsvTable operator_table(const SparseOperator& op);
// (t, value, running, norm_drift, energy_drift).
CsvTable track_table(const Track& tr);

} // namespace nelsonlab
