#include "gerbeflow/io.hpp"

#include <bit>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

static_assert(std::endian::native == std::endian::little,
              "GFLD writes raw little-endian float64; big-endian hosts need a swap pass");

namespace gf {

namespace {

using json = nlohmann::json;

const char* sym_name(symmetry s) {
  switch (s) {
    case symmetry::sym: return "sym";
    case symmetry::antisym: return "antisym";
    default: return "none";
  }
}

result<symmetry> sym_from_name(const std::string& s) {
  if (s == "sym") return symmetry::sym;
  if (s == "antisym") return symmetry::antisym;
  if (s == "none") return symmetry::none;
  return result<symmetry>::failure(errc::parse_error, "GFLD: unknown symmetry '" + s + "'");
}

}  // namespace

result<std::vector<named_field>> read_gfld(const std::string& path) {
  using R = result<std::vector<named_field>>;
  std::ifstream in(path, std::ios::binary);
  if (!in) return R::failure(errc::io_error, "cannot open '" + path + "'");

  std::string magic, header;
  if (!std::getline(in, magic) || magic != "GFLD 1")
    return R::failure(errc::parse_error, path + ": missing 'GFLD 1' header line");
  if (!std::getline(in, header))
    return R::failure(errc::parse_error, path + ": missing JSON header line");

  json j = json::parse(header, nullptr, false);
  if (j.is_discarded() || !j.is_object())
    return R::failure(errc::parse_error, path + ": header is not a JSON object");

  try {
    const int n = j.at("n").get<int>();
    const auto shape = j.at("shape").get<std::vector<std::size_t>>();
    const auto lengths = j.at("lengths").get<std::vector<double>>();
    auto lat = make_grid(n, shape, lengths);
    if (!lat.ok()) return R::failure(errc::parse_error, path + ": " + lat.err().message);

    std::vector<named_field> out;
    for (const auto& fd : j.at("fields")) {
      const auto name = fd.at("name").get<std::string>();
      const int rank = fd.at("rank").get<int>();
      const int comps = fd.at("components").get<int>();
      auto sym = sym_from_name(fd.at("symmetry").get<std::string>());
      if (!sym.ok()) return R::failure(sym.err().code, path + ": " + sym.err().message);
      if (rank < 0 || rank > n)
        return R::failure(errc::parse_error, path + ": field '" + name + "' has rank out of range");
      const int expect = component_count(n, rank, sym.value());
      if (comps != expect)
        return R::failure(errc::parse_error,
                          path + ": field '" + name + "' declares " + std::to_string(comps) +
                              " components, lattice expects " + std::to_string(expect));

      field<double> f(lat.value(), rank, sym.value());
      const std::size_t npts = f.npts();
      std::vector<double> buf(static_cast<std::size_t>(comps));
      for (std::size_t p = 0; p < npts; ++p) {
        in.read(reinterpret_cast<char*>(buf.data()), std::streamsize(sizeof(double) * buf.size()));
        if (!in)
          return R::failure(errc::parse_error, path + ": truncated payload in field '" + name + "'");
        for (int c = 0; c < comps; ++c) f.at(c, p) = buf[std::size_t(c)];
      }
      if (!f.finite())
        return R::failure(errc::parse_error, path + ": field '" + name + "' contains NaN/Inf");
      out.push_back({name, std::move(f)});
    }
    if (in.peek() != std::char_traits<char>::eof())
      return R::failure(errc::parse_error, path + ": trailing bytes after declared fields");
    return R(std::move(out));
  } catch (const json::exception& e) {
    return R::failure(errc::parse_error, path + ": malformed header: " + e.what());
  }
}

status write_gfld(const std::string& path, const std::vector<named_field>& fields) {
  if (fields.empty()) return fail(errc::invalid_argument, "write_gfld: no fields");
  const lattice& lat = fields.front().data.lat();
  for (const auto& nf : fields)
    if (!(nf.data.lat() == lat))
      return fail(errc::invalid_argument, "write_gfld: fields live on different lattices");

  json j;
  j["n"] = lat.naxes();
  std::vector<std::size_t> shape;
  std::vector<double> lengths;
  for (int a = 0; a < lat.naxes(); ++a) {
    shape.push_back(lat.size(a));
    lengths.push_back(lat.length(a));
  }
  j["shape"] = shape;
  j["lengths"] = lengths;
  j["fields"] = json::array();
  for (const auto& nf : fields)
    j["fields"].push_back({{"name", nf.name},
                           {"rank", nf.data.rank()},
                           {"symmetry", sym_name(nf.data.sym())},
                           {"components", nf.data.ncomp()}});

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) return fail(errc::io_error, "cannot open '" + tmp + "' for writing");
    out << "GFLD 1\n" << j.dump() << "\n";
    std::vector<double> buf;
    for (const auto& nf : fields) {
      const int comps = nf.data.ncomp();
      buf.resize(std::size_t(comps));
      for (std::size_t p = 0; p < nf.data.npts(); ++p) {
        for (int c = 0; c < comps; ++c) buf[std::size_t(c)] = nf.data.at(c, p);
        out.write(reinterpret_cast<const char*>(buf.data()),
                  std::streamsize(sizeof(double) * buf.size()));
      }
    }
    if (!out) {
      std::remove(tmp.c_str());
      return fail(errc::io_error, "short write to '" + tmp + "'");
    }
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    return fail(errc::io_error, "cannot rename '" + tmp + "' to '" + path + "'");
  }
  return ok();
}

}  // namespace gf
