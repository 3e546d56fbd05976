#pragma once

#include <string>
#include <vector>

#include "gerbeflow/errors.hpp"
#include "gerbeflow/field.hpp"

namespace gf {

/// GFLD container: named double-precision fields over one shared lattice.
/// On-disk layout is point-major (components fastest-varying); in-memory
/// fields are component-major, so io transposes.  Values are written as
/// little-endian float64; higher-precision fields must be narrowed by the
/// caller before writing.
struct named_field {
  std::string name;
  field<double> data;
};

result<std::vector<named_field>> read_gfld(const std::string& path);

/// Atomic: writes to a temporary in the same directory, then renames.
status write_gfld(const std::string& path, const std::vector<named_field>& fields);

}  // namespace gf
