#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "spechomog/config.hpp"
#include "spechomog/experiments.hpp"

using namespace spechomog::cli;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const json kTrivial = {{"model", {{"dimension", 1}, {"kernel", {{"type", "gaussian"}, {"sigma", 1.0}}}, {"kappa", "1"}, {"a", "2"}}},
                       {"experiment", {{"p_list", {-1, 0, 1}}}}};

fs::path temp_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("spechomog_cli_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

fs::path write_config(const fs::path& dir, const json& doc) {
  const auto p = dir / "config.json";
  std::ofstream(p) << doc.dump(2);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run(std::vector<std::string> args) {
  std::vector<char*> argv;
  static std::string prog = "spechomog";
  argv.push_back(prog.data());
  for (auto& a : args) argv.push_back(a.data());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

std::string config_error(const json& doc) {
  try {
    parse_config(doc);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("defaults are filled") {
  const auto cfg = parse_config({{"model", {{"a", "2"}}}, {"experiment", json::object()}});
  CHECK(cfg.grids.torus_n == 128);
  CHECK(cfg.grids.direct_q == 8);
  CHECK(cfg.tol.eigen == 1e-10);
  CHECK(cfg.document["grids"]["torus_n"] == 128);
  CHECK(cfg.document["tolerances"]["eigen"] == 1e-10);
  CHECK(cfg.experiment.K_list == std::vector<int>{8, 16, 32});
}

TEST_CASE("unknown keys are rejected with their path") {
  auto doc = kTrivial;
  doc["experiment"]["epsilonn"] = 0.1;
  const auto msg = config_error(doc);
  CHECK(msg.find("experiment.epsilonn") != std::string::npos);
  auto doc2 = kTrivial;
  doc2["model"]["kernel"]["sgma"] = 1;
  CHECK(config_error(doc2).find("model.kernel.sgma") != std::string::npos);
}

TEST_CASE("eps must be a reciprocal integer") {
  auto doc = kTrivial;
  doc["experiment"]["eps_list"] = {0.3};
  const auto msg = config_error(doc);
  CHECK(msg.find("experiment.eps_list[0]") != std::string::npos);
  CHECK(msg.find("1/K") != std::string::npos);
}

TEST_CASE("type and range errors") {
  auto doc = kTrivial;
  doc["tolerances"] = {{"eigen", -1.0}};
  CHECK(config_error(doc).find("tolerances.eigen") != std::string::npos);
  auto doc2 = kTrivial;
  doc2["grids"] = {{"torus_n", "big"}};
  CHECK(config_error(doc2).find("grids.torus_n") != std::string::npos);
  auto doc3 = kTrivial;
  doc3["model"]["a"] = "2 + q";
  CHECK_FALSE(config_error(doc3).empty());
}

TEST_CASE("hash ignores the output directory and tracks everything else") {
  auto a = kTrivial, b = kTrivial, c = kTrivial;
  b["output"] = "elsewhere";
  c["model"]["a"] = "2.5";
  CHECK(parse_config(a).hash == parse_config(b).hash);
  CHECK(parse_config(a).hash != parse_config(c).hash);
  CHECK(parse_config(a).hash.size() == 16);
}

TEST_CASE("schema forbids additional properties") {
  const auto s = config_schema();
  CHECK(s["additionalProperties"] == false);
  CHECK(s["properties"]["model"]["additionalProperties"] == false);
  CHECK(s["properties"]["grids"]["properties"]["torus_n"]["default"] == 128);
}

TEST_CASE("CSV formatting") {
  CHECK(fmt(0.1) == "0.10000000000000001");
  CHECK(fmt(1.0) == "1");
  CHECK(fmt(std::nan("")) == "");
  CsvTable t;
  t.columns = {"eps", "value"};
  t.add({fmt(0.125), fmt(2.0 / 3.0)});
  CHECK(t.render("abc") == "eps,value,config_hash\n0.125,0.66666666666666663,abc\n");
}

TEST_CASE("cell-h writes the three files with the trivial Hamiltonian") {
  const auto dir = temp_dir("cellh");
  const auto cfg = write_config(dir, kTrivial);
  CHECK(run({"cell-h", "--config", cfg.string(), "--out", (dir / "out").string()}) == 0);
  CHECK(fs::exists(dir / "out" / "config.schema.json"));
  CHECK(fs::exists(dir / "out" / "manifest.json"));
  std::ifstream in(dir / "out" / "cell-h.csv");
  std::string header, line;
  std::getline(in, header);
  CHECK(header.rfind("p1,H,", 0) == 0);
  CHECK(header.find("config_hash") == header.size() - std::string("config_hash").size());
  std::vector<double> H;
  while (std::getline(in, line)) {
    const auto c1 = line.find(','), c2 = line.find(',', c1 + 1);
    H.push_back(std::stod(line.substr(c1 + 1, c2 - c1 - 1)));
  }
  REQUIRE(H.size() == 3);
  CHECK(std::abs(H[0] - (2 - std::exp(0.5))) <= 1e-6);
  CHECK(std::abs(H[1] - 1.0) <= 1e-6);
  CHECK(std::abs(H[2] - (2 - std::exp(0.5))) <= 1e-6);
  const auto manifest = json::parse(slurp(dir / "out" / "manifest.json"));
  CHECK(manifest["exit_code"] == 0);
  CHECK(manifest["config"]["grids"]["torus_n"] == 128);
}

TEST_CASE("exit codes") {
  const auto dir = temp_dir("exit");
  auto bad = kTrivial;
  bad["model"]["kernle"] = 1;
  const auto cfg = write_config(dir, bad);
  CHECK(run({"cell-h", "--config", cfg.string(), "--out", (dir / "o1").string()}) == 2);
  CHECK(run({"nonsense", "--config", cfg.string(), "--out", (dir / "o2").string()}) == 2);
  CHECK(run({"cell-h", "--config", (dir / "missing.json").string(), "--out", (dir / "o3").string()}) == 2);

  // A kernel too narrow for the torus grid: the cell matrix has no coupling.
  auto narrow = kTrivial;
  narrow["model"]["kernel"]["sigma"] = 1e-4;
  narrow["grids"] = {{"torus_n", 4}};
  const auto cfg2 = write_config(dir, narrow);
  CHECK(run({"cell-h", "--config", cfg2.string(), "--out", (dir / "o4").string()}) == 3);
  const auto manifest = json::parse(slurp(dir / "o4" / "manifest.json"));
  CHECK(manifest["exit_code"] == 3);
  CHECK_FALSE(manifest["error"]["message"].get<std::string>().empty());
}

TEST_CASE("thread override from the environment") {
  const auto dir = temp_dir("threads");
  const auto cfg = write_config(dir, kTrivial);
  setenv("SPECHOMOG_THREADS", "2", 1);
  CHECK(run({"cell-h", "--config", cfg.string(), "--out", (dir / "a").string(), "--threads", "1"}) == 0);
  unsetenv("SPECHOMOG_THREADS");
  CHECK(run({"cell-h", "--config", cfg.string(), "--out", (dir / "b").string(), "--threads", "1"}) == 0);
  CHECK(json::parse(slurp(dir / "a" / "manifest.json"))["threads"] == 2);
  CHECK(json::parse(slurp(dir / "b" / "manifest.json"))["threads"] == 1);
  CHECK(slurp(dir / "a" / "cell-h.csv") == slurp(dir / "b" / "cell-h.csv"));
}
