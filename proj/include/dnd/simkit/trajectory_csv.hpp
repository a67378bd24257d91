#pragma once

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>

#include "dnd/errors.hpp"
#include "dnd/simkit/integrate.hpp"

namespace dnd::sim {

// Shortest decimal that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) throw FormatError("format_double: conversion failed");
  return std::string(buf, end);
}

inline double parse_double(std::string_view text) {
  double v = 0.0;
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size())
    throw FormatError("cannot parse number '" + std::string(text) + "'");
  return v;
}

inline std::string csv_header(std::size_t dim) {
  std::string h = "t";
  for (std::size_t i = 0; i < dim; ++i) h += ",z" + std::to_string(i);
  return h;
}

// Header `t,z0,...,z{n-1}`, one row per sample.
inline void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
  os << csv_header(traj.dim()) << '\n';
  for (std::size_t k = 0; k < traj.size(); ++k) {
    os << format_double(traj.time(k));
    for (double v : traj.samples[k]) os << ',' << format_double(v);
    os << '\n';
  }
}

inline void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& traj) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path.string() + " for writing");
  write_trajectory_csv(os, traj);
}

inline Trajectory read_trajectory_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw FormatError("trajectory csv: missing header");
  const std::size_t dim = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
  if (line != csv_header(dim)) throw FormatError("trajectory csv: unexpected header '" + line + "'");

  Trajectory traj;
  std::vector<double> times;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::size_t pos = 0;
    while (true) {
      const std::size_t comma = line.find(',', pos);
      row.push_back(parse_double(std::string_view(line).substr(pos, comma - pos)));
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (row.size() != dim + 1) throw FormatError("trajectory csv: wrong column count");
    times.push_back(row.front());
    traj.samples.emplace_back(row.begin() + 1, row.end());
  }
  if (times.empty()) throw FormatError("trajectory csv: no samples");
  traj.t0 = times.front();
  traj.dt = times.size() > 1 ? times[1] - times[0] : 0.0;
  return traj;
}

inline Trajectory read_trajectory_csv(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  return read_trajectory_csv(is);
}

}  // namespace dnd::sim
