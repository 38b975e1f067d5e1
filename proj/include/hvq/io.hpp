#pragma once

// Field snapshots and CSV export.
//
// Binary snapshot layout (all little-endian):
//   char[4]  magic "HVQ1"
//   u32      dims
//   dims x { f64 min, f64 max, u64 points }
//   dims x u8 boundary (0 = box, 1 = periodic)
//   f64      lambda
//   f64      time
//   size x { f64 re, f64 im }   row-major, last axis fastest

#include <iosfwd>
#include <string>
#include <vector>

#include "hvq/fields.hpp"

namespace hvq {

struct Snapshot {
  ComplexField field;
  double lambda = 1.0;
  double time = 0.0;
};

void write_snapshot(std::ostream& out, const ComplexField& field, double lambda, double time);
Snapshot read_snapshot(std::istream& in);

/// Header row `q0,...,re,im`, then one node per row.
void write_field_csv(std::ostream& out, const ComplexField& field,
                     const std::vector<std::string>& coordinate_names);
/// Header row `q0,...,value`.
void write_field_csv(std::ostream& out, const ScalarField& field,
                     const std::vector<std::string>& coordinate_names,
                     const std::string& value_name = "value");

/// Shortest round-trip decimal form used by every text export.
std::string format_real(double v);

}  // namespace hvq
