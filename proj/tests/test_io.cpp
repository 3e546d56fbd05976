#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <vector>

#include "gerbeflow/io.hpp"

using namespace gf;
namespace fs = std::filesystem;

namespace {

fs::path tmpfile(const char* stem) {
  return fs::temp_directory_path() / (std::string("gfld_test_") + stem + ".gfld");
}

field<double> ramp(const lattice& g, int rank, symmetry s, double salt) {
  field<double> f(g, rank, s);
  for (int c = 0; c < f.ncomp(); ++c)
    for (std::size_t p = 0; p < f.npts(); ++p)
      f.at(c, p) = std::sin(salt + 0.37 * double(c) + 0.011 * double(p));
  return f;
}

}  // namespace

TEST_CASE("GFLD round trip preserves values bitwise") {
  auto g = make_grid(2, {8, 16}, {1.0, 2.5}).value();
  std::vector<named_field> in;
  in.push_back({"phi", ramp(g, 0, symmetry::none, 0.1)});
  in.push_back({"a", ramp(g, 1, symmetry::none, 0.2)});
  in.push_back({"h", ramp(g, 2, symmetry::sym, 0.3)});
  in.push_back({"psi", ramp(g, 2, symmetry::antisym, 0.4)});

  auto path = tmpfile("roundtrip");
  REQUIRE(write_gfld(path.string(), in).ok());
  auto back = read_gfld(path.string());
  REQUIRE(back.ok());
  const auto& out = back.value();
  REQUIRE(out.size() == in.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    CHECK(out[i].name == in[i].name);
    CHECK(out[i].data.rank() == in[i].data.rank());
    CHECK(out[i].data.sym() == in[i].data.sym());
    REQUIRE(out[i].data.lat() == g);
    CHECK(out[i].data.raw() == in[i].data.raw());  // bitwise
  }
  CHECK_FALSE(fs::exists(path.string() + ".tmp"));  // renamed, not left behind
  fs::remove(path);
}

TEST_CASE("GFLD payload is point-major, components fastest") {
  auto g = make_grid(2, {8, 8}, {1.0, 1.0}).value();
  auto f = field<double>::oneform(g);
  for (int c = 0; c < 2; ++c)
    for (std::size_t p = 0; p < f.npts(); ++p) f.at(c, p) = 100.0 * c + double(p);

  auto path = tmpfile("layout");
  REQUIRE(write_gfld(path.string(), {{"v", f}}).ok());

  std::ifstream raw(path, std::ios::binary);
  std::string line;
  std::getline(raw, line);
  CHECK(line == "GFLD 1");
  std::getline(raw, line);  // JSON header
  CHECK(line.find("\"components\":2") != std::string::npos);
  std::vector<double> payload(2 * f.npts());
  raw.read(reinterpret_cast<char*>(payload.data()), std::streamsize(sizeof(double) * payload.size()));
  REQUIRE(bool(raw));
  for (std::size_t p = 0; p < f.npts(); ++p) {
    CHECK(payload[2 * p + 0] == 100.0 * 0 + double(p));
    CHECK(payload[2 * p + 1] == 100.0 * 1 + double(p));
  }
  fs::remove(path);
}

TEST_CASE("GFLD read rejects malformed input") {
  auto path = tmpfile("bad");

  CHECK_FALSE(read_gfld((path.string() + ".does_not_exist")).ok());

  auto write_text = [&](const std::string& body) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << body;
  };

  write_text("NOPE 1\n{}\n");
  auto r = read_gfld(path.string());
  REQUIRE_FALSE(r.ok());
  CHECK(r.err().code == errc::parse_error);

  write_text("GFLD 1\nnot json at all\n");
  CHECK_FALSE(read_gfld(path.string()).ok());

  // wrong component count for the declared rank/symmetry
  write_text(
      "GFLD 1\n"
      R"({"n":2,"shape":[8,8],"lengths":[1.0,1.0],"fields":[{"name":"h","rank":2,"symmetry":"sym","components":4}]})"
      "\n");
  auto rc = read_gfld(path.string());
  REQUIRE_FALSE(rc.ok());
  CHECK(rc.err().message.find("components") != std::string::npos);

  // truncated payload
  write_text(
      "GFLD 1\n"
      R"({"n":1,"shape":[8],"lengths":[1.0],"fields":[{"name":"f","rank":0,"symmetry":"none","components":1}]})"
      "\n");
  {
    std::ofstream app(path, std::ios::binary | std::ios::app);
    double half[4] = {1, 2, 3, 4};
    app.write(reinterpret_cast<char*>(half), sizeof(half));
  }
  auto rt = read_gfld(path.string());
  REQUIRE_FALSE(rt.ok());
  CHECK(rt.err().message.find("truncated") != std::string::npos);

  // trailing bytes after the declared fields
  auto g = make_grid(1, {8}, {1.0}).value();
  auto f = field<double>::scalar(g);
  REQUIRE(write_gfld(path.string(), {{"f", f}}).ok());
  {
    std::ofstream app(path, std::ios::binary | std::ios::app);
    app << "junk";
  }
  auto rj = read_gfld(path.string());
  REQUIRE_FALSE(rj.ok());
  CHECK(rj.err().message.find("trailing") != std::string::npos);

  // NaN payload violates the finiteness invariant
  f.at(0, 3) = std::nan("");
  REQUIRE(write_gfld(path.string(), {{"f", f}}).ok());
  auto rn = read_gfld(path.string());
  REQUIRE_FALSE(rn.ok());
  CHECK(rn.err().message.find("NaN") != std::string::npos);

  fs::remove(path);
}

TEST_CASE("GFLD write validation") {
  CHECK_FALSE(write_gfld("/tmp/x.gfld", {}).ok());
  auto g1 = make_grid(1, {8}, {1.0}).value();
  auto g2 = make_grid(1, {16}, {1.0}).value();
  auto a = field<double>::scalar(g1);
  auto b = field<double>::scalar(g2);
  auto st = write_gfld(tmpfile("mix").string(), {{"a", a}, {"b", b}});
  REQUIRE_FALSE(st.ok());
  CHECK(st.err().code == errc::invalid_argument);
}
