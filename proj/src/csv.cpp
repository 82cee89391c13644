#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "rot/io.hpp"

namespace rot::io {

namespace {

double parse_value(std::string_view tok, const std::string& where) {
  while (!tok.empty() && (tok.front() == ' ' || tok.front() == '\t')) tok.remove_prefix(1);
  while (!tok.empty() && (tok.back() == ' ' || tok.back() == '\t' || tok.back() == '\r'))
    tok.remove_suffix(1);
  if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (tok.empty() || ec != std::errc() || ptr != tok.data() + tok.size())
    throw Error(ErrorCode::Io, "cannot parse '" + std::string(tok) + "' in " + where);
  return v;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
  return out;
}

bool blank(const std::string& line) {
  return line.find_first_not_of(" \t\r") == std::string::npos;
}

}  // namespace

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(parse_value(tok, "list"));
  return out;
}

std::vector<double> read_vector(const std::string& path) {
  auto in = open_in(path);
  std::vector<double> out;
  std::string line;
  while (std::getline(in, line))
    if (!blank(line)) out.push_back(parse_value(line, path));
  return out;
}

Matrix read_matrix(const std::string& path) {
  auto in = open_in(path);
  std::vector<double> data;
  std::size_t rows = 0, cols = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (blank(line)) continue;
    std::size_t count = 0;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      data.push_back(parse_value(tok, path));
      ++count;
    }
    if (rows == 0) cols = count;
    if (count != cols)
      throw Error(ErrorCode::Io, path + ": row " + std::to_string(rows + 1) + " has " +
                                     std::to_string(count) + " values, expected " +
                                     std::to_string(cols));
    ++rows;
  }
  if (rows == 0) throw Error(ErrorCode::EmptyInput, path + " holds no matrix rows");
  return Matrix(rows, cols, std::move(data));
}

void write_vector(const std::string& path, const std::vector<double>& values) {
  auto out = open_out(path);
  for (double v : values) out << format_double(v) << '\n';
}

void write_matrix(const std::string& path, const Matrix& m) {
  auto out = open_out(path);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      if (j) out << ',';
      out << format_double(m(i, j));
    }
    out << '\n';
  }
}

void write_pgm(const std::string& path, const Matrix& m) {
  auto out = open_out(path);
  double top = 0.0;
  for (double v : m.data()) top = std::max(top, v);
  out << "P2\n" << m.cols() << ' ' << m.rows() << "\n255\n";
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      const double v = top > 0.0 ? std::max(0.0, m(i, j)) / top : 0.0;
      if (j) out << ' ';
      out << static_cast<int>(std::lround(255.0 * v));
    }
    out << '\n';
  }
}

}  // namespace rot::io
