#pragma once

// Trace and report serialization. CSV floats use 17 significant digits so
// values round-trip exactly.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "piag/solver.hpp"

namespace piag {

inline constexpr const char* kTraceCsvHeader = "k,F_k,norm_d_k,dist_to_opt,grad_error,eta";

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Columns: k, F_k, norm_d_k, dist_to_opt, grad_error, eta. One row per
/// recorded iterate, k = 0 included.
inline void write_trace_csv(std::ostream& os, const IterateTrace& t) {
  os << kTraceCsvHeader << '\n';
  const std::string eta = format_double(t.eta);
  for (const auto& r : t.rows) {
    os << r.k << ',' << format_double(r.suboptimality) << ',' << format_double(r.norm_d) << ','
       << format_double(r.dist_to_opt) << ',' << format_double(r.grad_error) << ',' << eta
       << '\n';
  }
}

inline nlohmann::json trace_metadata_json(const IterateTrace& t) {
  nlohmann::json j = t.metadata;
  j["status"] = to_string(t.status);
  j["diagnostic"] = t.diagnostic;
  j["iterations"] = t.iterations();
  j["rows"] = t.rows.size();
  j["eta"] = t.eta;
  j["K"] = t.K;
  j["reference"] = {{"value", t.reference_value}, {"residual", t.reference_residual}};
  j["csv_columns"] = kTraceCsvHeader;
  return j;
}

/// Writes through a temporary file in the same directory and renames it
/// into place.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out << contents;
    if (!out) throw std::runtime_error("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::string trace_csv_string(const IterateTrace& t) {
  std::ostringstream os;
  write_trace_csv(os, t);
  return os.str();
}

}  // namespace piag
