#include "pgflow/field_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <ostream>
#include <istream>
#include <stdexcept>

namespace pgflow {

namespace binio {

namespace {

template <typename T>
void put_le(std::ostream& os, T v) {
  unsigned char bytes[sizeof(T)];
  for (std::size_t k = 0; k < sizeof(T); ++k) bytes[k] = static_cast<unsigned char>(v >> (8 * k));
  os.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(std::istream& is) {
  unsigned char bytes[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw std::runtime_error("truncated binary stream");
  T v = 0;
  for (std::size_t k = 0; k < sizeof(T); ++k) v |= static_cast<T>(bytes[k]) << (8 * k);
  return v;
}

}  // namespace

void put_u32(std::ostream& os, std::uint32_t v) { put_le(os, v); }
void put_u64(std::ostream& os, std::uint64_t v) { put_le(os, v); }
void put_f64(std::ostream& os, double v) { put_le(os, std::bit_cast<std::uint64_t>(v)); }
std::uint32_t get_u32(std::istream& is) { return get_le<std::uint32_t>(is); }
std::uint64_t get_u64(std::istream& is) { return get_le<std::uint64_t>(is); }
double get_f64(std::istream& is) { return std::bit_cast<double>(get_le<std::uint64_t>(is)); }

}  // namespace binio

namespace {

constexpr char kMagic[8] = {'C', 'T', 'R', 'L', 'F', 'L', 'D', '1'};

void write_blob(std::ostream& os, const SpaceTimeGrid& g, std::uint32_t width, FieldRole role,
                const std::vector<double>& values) {
  os.write(kMagic, sizeof(kMagic));
  binio::put_u32(os, static_cast<std::uint32_t>(g.dim()));
  binio::put_u32(os, width);
  binio::put_u32(os, static_cast<std::uint32_t>(g.n_t()));
  binio::put_u32(os, static_cast<std::uint32_t>(g.n_x()));
  binio::put_u32(os, static_cast<std::uint32_t>(role));
  for (double v : values) binio::put_f64(os, v);
  if (!os) throw std::runtime_error("failed to write field");
}

std::vector<double> read_payload(std::istream& is, std::size_t count) {
  std::vector<double> values(count);
  for (double& v : values) v = binio::get_f64(is);
  return values;
}

SpaceTimeGrid grid_from(const FieldHeader& h, int dim_control, double horizon) {
  TorusGeometry geo{static_cast<int>(h.dim_state), dim_control, 1};
  return SpaceTimeGrid(geo, horizon, static_cast<int>(h.n_t), static_cast<int>(h.n_x));
}

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  return os;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open '" + path + "'");
  return is;
}

void write_csv_rows(std::ostream& os, const SpaceTimeGrid& g, int width, const std::string& label,
                    const std::vector<double>& values, const std::string& comment) {
  if (!comment.empty()) os << "# " << comment << '\n';
  os << 't';
  for (int a = 0; a < g.dim(); ++a) os << ",x" << a + 1;
  if (width == 1) {
    os << ',' << label;
  } else {
    for (int k = 0; k < width; ++k) os << ',' << label << k + 1;
  }
  os << '\n';
  const auto old_precision = os.precision(17);
  for (int l = 0; l < g.n_t(); ++l) {
    for (std::size_t i = 0; i < g.nodes(); ++i) {
      os << g.time(l);
      const Vec x = g.node_position(i);
      for (int a = 0; a < g.dim(); ++a) os << ',' << x[a];
      for (int k = 0; k < width; ++k) os << ',' << values[(l * g.nodes() + i) * width + k];
      os << '\n';
    }
  }
  os.precision(old_precision);
}

}  // namespace

void write_field(std::ostream& os, const ScalarField& f) {
  write_blob(os, f.grid(), 1, f.role(), f.values());
}

void write_field(std::ostream& os, const ControlField& u) {
  write_blob(os, u.grid(), static_cast<std::uint32_t>(u.components()), FieldRole::kControl, u.values());
}

void save_field(const std::string& path, const ScalarField& f) {
  auto os = open_out(path);
  write_field(os, f);
}

void save_field(const std::string& path, const ControlField& u) {
  auto os = open_out(path);
  write_field(os, u);
}

FieldHeader read_field_header(std::istream& is) {
  char magic[sizeof(kMagic)];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("not a CTRLFLD1 field blob");
  }
  FieldHeader h;
  h.dim_state = binio::get_u32(is);
  h.dim_control = binio::get_u32(is);
  h.n_t = binio::get_u32(is);
  h.n_x = binio::get_u32(is);
  const std::uint32_t role = binio::get_u32(is);
  if (role > static_cast<std::uint32_t>(FieldRole::kControl)) throw std::runtime_error("unknown field role tag");
  h.role = static_cast<FieldRole>(role);
  return h;
}

ScalarField read_scalar_field(std::istream& is, double horizon) {
  const FieldHeader h = read_field_header(is);
  if (h.dim_control != 1 || h.role == FieldRole::kControl) throw std::runtime_error("blob does not hold a scalar field");
  SpaceTimeGrid g = grid_from(h, 1, horizon);
  auto values = read_payload(is, g.nodes() * g.n_t());
  return ScalarField(g, h.role, std::move(values));
}

ControlField read_control_field(std::istream& is, double horizon) {
  const FieldHeader h = read_field_header(is);
  if (h.role != FieldRole::kControl) throw std::runtime_error("blob does not hold a control field");
  SpaceTimeGrid g = grid_from(h, static_cast<int>(h.dim_control), horizon);
  auto values = read_payload(is, g.nodes() * g.n_t() * h.dim_control);
  return ControlField(g, std::move(values));
}

ScalarField load_scalar_field(const std::string& path, double horizon) {
  auto is = open_in(path);
  return read_scalar_field(is, horizon);
}

ControlField load_control_field(const std::string& path, double horizon) {
  auto is = open_in(path);
  return read_control_field(is, horizon);
}

void write_field_csv(std::ostream& os, const ScalarField& f, const std::string& comment) {
  write_csv_rows(os, f.grid(), 1, "value", f.values(), comment);
}

void write_field_csv(std::ostream& os, const ControlField& u, const std::string& comment) {
  write_csv_rows(os, u.grid(), u.components(), "value", u.values(), comment);
}

}  // namespace pgflow
