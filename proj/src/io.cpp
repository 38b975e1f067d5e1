#include "hvq/io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <istream>
#include <ostream>

#include <fmt/format.h>

namespace hvq {

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <class T>
void put(std::ostream& out, T value) {
  std::array<char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.write(bytes.data(), bytes.size());
}

template <class T>
T get(std::istream& in) {
  std::array<char, sizeof(T)> bytes;
  if (!in.read(bytes.data(), bytes.size())) throw Error("snapshot truncated");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

}  // namespace

void write_snapshot(std::ostream& out, const ComplexField& field, double lambda, double time) {
  const Grid& g = field.grid();
  out.write("HVQ1", 4);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(g.dims()));
  for (const Axis& ax : g.axes()) {
    put<double>(out, ax.min);
    put<double>(out, ax.max);
    put<std::uint64_t>(out, ax.points);
  }
  for (const Axis& ax : g.axes()) put<std::uint8_t>(out, static_cast<std::uint8_t>(ax.boundary));
  put<double>(out, lambda);
  put<double>(out, time);
  for (const complex& v : field.values()) {
    put<double>(out, v.real());
    put<double>(out, v.imag());
  }
  if (!out) throw Error("failed to write snapshot");
}

Snapshot read_snapshot(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "HVQ1", 4) != 0)
    throw Error("not an HVQ1 snapshot");
  const auto dims = get<std::uint32_t>(in);
  if (dims == 0 || dims > 16) throw Error("snapshot has an implausible dimension count");
  std::vector<Axis> axes(dims);
  for (auto& ax : axes) {
    ax.min = get<double>(in);
    ax.max = get<double>(in);
    ax.points = static_cast<std::size_t>(get<std::uint64_t>(in));
  }
  for (auto& ax : axes) {
    const auto b = get<std::uint8_t>(in);
    if (b > 1) throw Error("snapshot has an unknown boundary flag");
    ax.boundary = static_cast<Boundary>(b);
  }
  Grid grid(std::move(axes));
  const double lambda = get<double>(in);
  const double time = get<double>(in);
  std::vector<complex> values(grid.size());
  for (auto& v : values) {
    const double re = get<double>(in);
    const double im = get<double>(in);
    v = {re, im};
  }
  return {ComplexField(std::move(grid), std::move(values)), lambda, time};
}

std::string format_real(double v) { return fmt::format("{}", v); }

namespace {

void write_header(std::ostream& out, const std::vector<std::string>& names, std::size_t dims) {
  if (names.size() != dims) throw InvalidArgument("coordinate name count does not match grid");
  for (const auto& n : names) out << n << ',';
}

void write_coords(std::ostream& out, const Grid& g, std::size_t k) {
  for (std::size_t a = 0; a < g.dims(); ++a) out << format_real(g.coordinate(k, a)) << ',';
}

}  // namespace

void write_field_csv(std::ostream& out, const ComplexField& field,
                     const std::vector<std::string>& coordinate_names) {
  const Grid& g = field.grid();
  write_header(out, coordinate_names, g.dims());
  out << "re,im\n";
  for (std::size_t k = 0; k < field.size(); ++k) {
    write_coords(out, g, k);
    out << format_real(field[k].real()) << ',' << format_real(field[k].imag()) << '\n';
  }
}

void write_field_csv(std::ostream& out, const ScalarField& field,
                     const std::vector<std::string>& coordinate_names,
                     const std::string& value_name) {
  const Grid& g = field.grid();
  write_header(out, coordinate_names, g.dims());
  out << value_name << '\n';
  for (std::size_t k = 0; k < field.size(); ++k) {
    write_coords(out, g, k);
    out << format_real(field[k]) << '\n';
  }
}

}  // namespace hvq
