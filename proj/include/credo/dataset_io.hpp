#pragma once

#include <string>

#include "credo/scm.hpp"

namespace credo::scm {

/// Shortest decimal string that parses back to exactly the same double.
std::string format_double(double value);

/// Writes <path> as CSV with header g0..,c0..,x0.. and a JSON sidecar next to
/// it (same stem, .json extension) carrying {graph_name, seed, n, intervention}.
/// Unobserved nodes never appear in the output.
void write_dataset(const Dataset& dataset, const std::string& csv_path);

/// Reads a CSV written by write_dataset. The sidecar is required; malformed
/// rows are rejected with their line number.
Dataset read_dataset(const std::string& csv_path);

std::string sidecar_path(const std::string& csv_path);

}  // namespace credo::scm
