#pragma once

#include <iosfwd>
#include <string>

#include "pgflow/fields.hpp"

namespace pgflow {

/// Binary field container: "CTRLFLD1", little-endian u32 header
/// (n, n', n_t, n_x, role), then the f64 values in storage order. Scalar
/// fields record n' = 1. The horizon is not stored; load_* take it.
void write_field(std::ostream& os, const ScalarField& f);
void write_field(std::ostream& os, const ControlField& u);
void save_field(const std::string& path, const ScalarField& f);
void save_field(const std::string& path, const ControlField& u);

/// Header of a field blob.
struct FieldHeader {
  std::uint32_t dim_state = 0;
  std::uint32_t dim_control = 0;
  std::uint32_t n_t = 0;
  std::uint32_t n_x = 0;
  FieldRole role = FieldRole::kGeneric;
};

/// Reads the header only. Throws std::runtime_error on a bad magic or a
/// truncated stream.
FieldHeader read_field_header(std::istream& is);

ScalarField read_scalar_field(std::istream& is, double horizon);
ControlField read_control_field(std::istream& is, double horizon);
ScalarField load_scalar_field(const std::string& path, double horizon);
ControlField load_control_field(const std::string& path, double horizon);

/// Plotting export: header "t,x1..xn,value" (or value1..valuek for
/// controls), one row per space-time node. Lines starting with '#' carry
/// `comment` when it is non-empty.
void write_field_csv(std::ostream& os, const ScalarField& f, const std::string& comment = "");
void write_field_csv(std::ostream& os, const ControlField& u, const std::string& comment = "");

namespace binio {

void put_u32(std::ostream& os, std::uint32_t v);
void put_u64(std::ostream& os, std::uint64_t v);
void put_f64(std::ostream& os, double v);
std::uint32_t get_u32(std::istream& is);
std::uint64_t get_u64(std::istream& is);
double get_f64(std::istream& is);

}  // namespace binio

}  // namespace pgflow
