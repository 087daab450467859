#include <doctest.h>

#include <cmath>
#include <sstream>

#include "pgflow/config.hpp"
#include "pgflow/errors.hpp"
#include "pgflow/field_io.hpp"
#include "support.hpp"

using namespace pgflow;
using testing::vec;

namespace {

KeyValueConfig parse(const std::string& text) {
  std::istringstream is(text);
  return KeyValueConfig::parse(is);
}

}  // namespace

TEST_CASE("scalar field round trip and header") {
  const SpaceTimeGrid g(TorusGeometry{2, 1, 2}, 0.7, 4, 5);
  const ScalarField f = ScalarField::sample(g, FieldRole::kDensity, [](double t, const Vec& x) {
    return t + 10.0 * x[0] - x[1] + 1e-300;
  });
  std::stringstream ss;
  write_field(ss, f);
  CHECK(ss.str().size() == 8 + 5 * 4 + 8 * f.values().size());
  CHECK(ss.str().substr(0, 8) == "CTRLFLD1");

  std::stringstream hs(ss.str());
  const FieldHeader h = read_field_header(hs);
  CHECK(h.dim_state == 2);
  CHECK(h.dim_control == 1);
  CHECK(h.n_t == 4);
  CHECK(h.n_x == 5);
  CHECK(h.role == FieldRole::kDensity);

  const ScalarField r = read_scalar_field(ss, 0.7);
  CHECK(r.values() == f.values());
  CHECK(r.role() == FieldRole::kDensity);
  CHECK(r.grid().same_shape(g));
}

TEST_CASE("control field round trip through a file") {
  const SpaceTimeGrid g(TorusGeometry{1, 2, 1}, 0.2, 3, 4);
  const ControlField u = ControlField::sample(g, [](double t, const Vec& x) { return vec(t, -x[0]); });
  const std::string path = testing::scratch_dir("io") + "/u.ctrlfld";
  save_field(path, u);
  const ControlField r = load_control_field(path, 0.2);
  CHECK(r.values() == u.values());
  CHECK(r.components() == 2);
  CHECK_THROWS(load_scalar_field(path, 0.2));
  CHECK_THROWS(load_control_field(path + ".missing", 0.2));
}

TEST_CASE("corrupt field blobs are rejected") {
  const SpaceTimeGrid g(TorusGeometry{1, 1, 1}, 1.0, 2, 4);
  const ScalarField f(g, FieldRole::kValue);
  std::stringstream ss;
  write_field(ss, f);
  std::string bytes = ss.str();

  std::string magic = bytes;
  magic[7] = '2';
  std::istringstream bad_magic(magic);
  CHECK_THROWS(read_scalar_field(bad_magic, 1.0));

  std::istringstream truncated(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS(read_scalar_field(truncated, 1.0));
}

TEST_CASE("little-endian primitives") {
  std::stringstream ss;
  binio::put_u32(ss, 0x01020304u);
  CHECK(ss.str() == std::string("\x04\x03\x02\x01", 4));
  binio::put_u64(ss, 0x1122334455667788ull);
  binio::put_f64(ss, -0.1);
  CHECK(binio::get_u32(ss) == 0x01020304u);
  CHECK(binio::get_u64(ss) == 0x1122334455667788ull);
  CHECK(binio::get_f64(ss) == -0.1);
}

TEST_CASE("CSV export") {
  const SpaceTimeGrid g(TorusGeometry{1, 1, 1}, 1.0, 2, 4);
  const ScalarField f = ScalarField::sample(g, FieldRole::kValue, [](double t, const Vec&) { return t; });
  std::ostringstream os;
  write_field_csv(os, f, "digest abc");
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  CHECK(line == "# digest abc");
  std::getline(is, line);
  CHECK(line == "t,x1,value");
  int rows = 0;
  while (std::getline(is, line)) ++rows;
  CHECK(rows == 8);
}

TEST_CASE("config parsing and typed getters") {
  const KeyValueConfig kv = parse(
      "# comment\n"
      "problem = quartic_trap\n"
      "\n"
      "n_t=33   # trailing comment\n"
      "dtau = 0.25\n"
      "flag = true\n"
      "seed = 18446744073709551615\n");
  CHECK(kv.require_string("problem") == "quartic_trap");
  CHECK(kv.get_int("n_t", 0) == 33);
  CHECK(kv.get_double("dtau", 0.0) == 0.25);
  CHECK(kv.get_bool("flag", false));
  CHECK(kv.get_u64("seed", 0) == 18446744073709551615ull);
  CHECK(kv.get_double("absent", 1.5) == 1.5);
  CHECK_FALSE(kv.find_double("absent").has_value());
  CHECK(kv.unused_keys().empty());
}

TEST_CASE("config errors name the offending key or line number") {
  auto message = [](auto&& fn) {
    try {
      fn();
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(message([] { parse("a = 1\na = 2\n"); }).find(":2:") != std::string::npos);
  CHECK(message([] { parse("no equals sign\n"); }).find(":1:") != std::string::npos);
  CHECK(message([] { parse("= 3\n"); }).find(":1:") != std::string::npos);
  const KeyValueConfig kv = parse("n = 3.5\nx = abc\nb = maybe\n");
  CHECK(message([&] { kv.get_int("n", 0); }).find("'n'") != std::string::npos);
  CHECK(message([&] { kv.get_double("x", 0); }).find("'x'") != std::string::npos);
  CHECK(message([&] { kv.get_bool("b", false); }).find("'b'") != std::string::npos);
  CHECK(message([&] { kv.require_string("problem"); }).find("'problem'") != std::string::npos);
  CHECK_THROWS_AS(KeyValueConfig::load("/nonexistent/pgflow.cfg"), ConfigError);

  const KeyValueConfig extra = parse("used = 1\ntypo = 2\n");
  extra.get_int("used", 0);
  CHECK(extra.unused_keys() == std::set<std::string>{"typo"});
}

TEST_CASE("digest ignores order and excluded keys") {
  const KeyValueConfig a = parse("x = 1\ny = 2\nout_dir = a\n");
  const KeyValueConfig b = parse("y=2\nout_dir = b\nx=1\n");
  CHECK(a.digest({"out_dir"}) == b.digest({"out_dir"}));
  CHECK(a.digest() != b.digest());
  CHECK(a.digest().size() == 16);
  KeyValueConfig c = a;
  c.set("x", "3");
  CHECK(c.digest({"out_dir"}) != a.digest({"out_dir"}));
}
