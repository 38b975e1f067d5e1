#include <doctest.h>

#include <sstream>

#include "helpers.hpp"
#include "hvq/io.hpp"

using namespace hvq;

TEST_CASE("snapshot round trip is bit exact") {
  const Grid g({Axis{-1.5, 2.0, 7}, Axis{0.0, 3.0, 5, Boundary::periodic}});
  const ComplexField psi = hvq::test::tabulate_complex(g, [](auto q) { return complex(q[0] / 3.0, std::sin(q[1])); });
  std::stringstream ss(std::ios::in | std::ios::out | std::ios::binary);
  write_snapshot(ss, psi, -0.7, 1.25);
  const Snapshot s = read_snapshot(ss);
  CHECK(s.field == psi);
  CHECK(s.lambda == -0.7);
  CHECK(s.time == 1.25);
}

TEST_CASE("snapshot header layout") {
  const Grid g = Grid::line(0.0, 1.0, 3);
  std::stringstream ss(std::ios::in | std::ios::out | std::ios::binary);
  write_snapshot(ss, ComplexField(g), 1.0, 0.0);
  const std::string bytes = ss.str();
  CHECK(bytes.substr(0, 4) == "HVQ1");
  CHECK(bytes.size() == 4 + 4 + 24 + 1 + 8 + 8 + 3 * 16);
}

TEST_CASE("corrupt snapshots are rejected") {
  std::stringstream bad("XXXX0000", std::ios::in | std::ios::binary);
  CHECK_THROWS_AS(read_snapshot(bad), Error);
  const Grid g = Grid::line(0.0, 1.0, 3);
  std::stringstream ss(std::ios::in | std::ios::out | std::ios::binary);
  write_snapshot(ss, ComplexField(g), 1.0, 0.0);
  std::stringstream cut(ss.str().substr(0, 40), std::ios::in | std::ios::binary);
  CHECK_THROWS_AS(read_snapshot(cut), Error);
}

TEST_CASE("CSV export lists coordinates then re and im") {
  const Grid g = Grid::line(0.0, 1.0, 3);
  ComplexField psi(g);
  psi[1] = complex(0.25, -1.0);
  std::ostringstream out;
  write_field_csv(out, psi, {"x"});
  CHECK(out.str() == "x,re,im\n0,0,0\n0.5,0.25,-1\n1,0,0\n");
}

TEST_CASE("real formatting round trips") {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23}) CHECK(std::stod(format_real(v)) == v);
}
