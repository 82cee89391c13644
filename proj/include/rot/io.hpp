#pragma once

#include <string>
#include <vector>

#include "rot/core.hpp"

namespace rot::io {

// Vector CSV: one value per line. Matrix CSV: comma-separated rows.
// Values are written with 17 significant digits so reading them back is exact.
std::vector<double> read_vector(const std::string& path);
Matrix read_matrix(const std::string& path);
void write_vector(const std::string& path, const std::vector<double>& values);
void write_matrix(const std::string& path, const Matrix& m);

std::string format_double(double v);
std::vector<double> parse_list(const std::string& text);

/// Plain PGM (P2) scaled so the largest entry maps to 255.
void write_pgm(const std::string& path, const Matrix& m);

}  // namespace rot::io
