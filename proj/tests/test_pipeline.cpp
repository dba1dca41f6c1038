#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include <gtest/gtest.h>

#include "qdres/cache.hpp"
#include "qdres/pipeline.hpp"

namespace {

using namespace qdres;
namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("qdres-test-" + name + "-" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

SweepConfig small_config(const fs::path& dir) {
  SweepConfig c;
  c.N = 4;
  c.alpha_points = 5;
  c.lambda_min = 1.0;
  c.lambda_max = 2.0;
  c.lambda_step = 0.05;
  c.branch_lambda_step = 0.25;
  c.output_dir = (dir / "out").string();
  c.cache_dir = (dir / "cache").string();
  return c;
}

TEST(Cache, OperatorRoundTripIsBitIdentical) {
  const auto dir = scratch("ops");
  const BasisSpec spec{5, 1.7};
  const auto ops = build_operator_set(spec);
  const auto p = dir / "ops.bin";
  save_operator_set(p, ops);
  const auto back = load_operator_set(p, spec);
  EXPECT_TRUE(back.S == ops.S && back.T == ops.T && back.V == ops.V && back.W == ops.W);
  EXPECT_EQ(back.index.size(), ops.index.size());

  // a different basis must not load from this file
  EXPECT_THROW(load_operator_set(p, {5, 1.8}), Error);
  fs::remove_all(dir);
}

TEST(Cache, TruncatedFileIsRejected) {
  const auto dir = scratch("trunc");
  const BasisSpec spec{3, 2.0};
  const auto p = dir / "ops.bin";
  save_operator_set(p, build_operator_set(spec));
  fs::resize_file(p, fs::file_size(p) / 2);
  EXPECT_THROW(load_operator_set(p, spec), Error);
  fs::remove_all(dir);
}

TEST(Cache, KeySensitivity) {
  CacheKey k;
  k.kind = "lambda-scan";
  k.N = 14;
  k.alpha = 2.0;
  k.V0 = 5.0;
  k.theta = 0.0;
  k.lambdas = {1.5, 1.6};
  CacheKey same = k;
  EXPECT_EQ(cache_key(k), cache_key(same));
  EXPECT_EQ(cache_key(k).size(), 64u);

  auto differs = [&](auto mutate) {
    CacheKey m = k;
    mutate(m);
    return cache_key(m) != cache_key(k);
  };
  EXPECT_TRUE(differs([](CacheKey& m) { m.alpha = std::nextafter(m.alpha, 3.0); }));
  EXPECT_TRUE(differs([](CacheKey& m) { m.V0 = std::nextafter(*m.V0, 6.0); }));
  EXPECT_TRUE(differs([](CacheKey& m) { m.theta = 1e-300; }));
  EXPECT_TRUE(differs([](CacheKey& m) { m.lambdas[1] = std::nextafter(1.6, 2.0); }));
  EXPECT_TRUE(differs([](CacheKey& m) { m.N = 13; }));
  EXPECT_TRUE(differs([](CacheKey& m) { m.format += 1; }));
}

TEST(Cache, HitsAndMisses) {
  const auto dir = scratch("hits");
  Cache cache(dir);
  const BasisSpec spec{3, 2.0};
  const auto a = cache.operators(spec);
  EXPECT_EQ(cache.misses(), 1u);
  const auto b = cache.operators(spec);
  EXPECT_EQ(cache.hits(), 1u);
  EXPECT_TRUE(a->S == b->S && a->W == b->W);

  const auto red = cache.reduced(spec, 1e-12);
  const auto s1 = cache.scan(red, 5.0, {1.0, 1.1, 1.2}, 8);
  const auto s2 = cache.scan(red, 5.0, {1.0, 1.1, 1.2}, 8);
  ASSERT_EQ(s1.slices.size(), s2.slices.size());
  for (std::size_t i = 0; i < s1.slices.size(); ++i) {
    EXPECT_TRUE(s1.slices[i].energies == s2.slices[i].energies);
    EXPECT_TRUE(s1.slices[i].Y == s2.slices[i].Y);
  }
  EXPECT_EQ(cache.hits(), 3u);  // second operator load inside reduced() plus the scan
  fs::remove_all(dir);
}

TEST(Config, JsonRoundTripAndHash) {
  SweepConfig a;
  nlohmann::json j;
  to_json(j, a);
  SweepConfig b;
  b.V0 = 7.0;
  b.thetas = {0.1};
  apply_json(b, j);
  EXPECT_EQ(config_hash(a), config_hash(b));

  b.output_dir = "elsewhere";
  b.workers = 3;
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.alpha = std::nextafter(2.0, 3.0);
  EXPECT_NE(config_hash(a), config_hash(b));
}

TEST(Config, RejectsUnknownAndMistypedKeys) {
  SweepConfig c;
  try {
    apply_json(c, nlohmann::json{{"alhpa", 2.0}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidArgument);
  }
  EXPECT_THROW(apply_json(c, nlohmann::json{{"N", "fourteen"}}), Error);
  EXPECT_THROW(apply_json(c, nlohmann::json::array()), Error);
}

TEST(Config, FileOverridesAndValidation) {
  const auto dir = scratch("cfg");
  const auto p = dir / "c.json";
  std::ofstream(p) << R"({"N": 6, "alpha": 2.5})";
  SweepConfig c;
  c.N = 10;
  apply_config_file(c, p.string());
  EXPECT_EQ(c.N, 6);
  EXPECT_EQ(c.alpha, 2.5);
  EXPECT_EQ(c.V0, 5.0);
  EXPECT_THROW(apply_config_file(c, (dir / "missing.json").string()), Error);

  c.reference_theta = 0.3;
  EXPECT_THROW(c.validate(), Error);
  fs::remove_all(dir);
}

TEST(ResultStore, CsvAndManifest) {
  const auto dir = scratch("store");
  SweepConfig cfg;
  cfg.output_dir = dir.string();
  ResultStore store(cfg, "figure 4");
  CsvTable t{"x.csv", "x/1", {"a note"}, {"a", "b"}, {}};
  t.add({"1", fmt_num(0.5)});
  t.add({"2", fmt_num(std::nan(""))});
  EXPECT_THROW(t.add({"3"}), Error);
  store.write(t);
  store.fail("somewhere", ErrorKind::NoPeak, "nothing here");
  store.note("epsilon", -1.09);
  store.write_manifest();

  const std::string csv = slurp(dir / "x.csv");
  EXPECT_EQ(csv, "# schema: x/1\n# a note\na,b,config_hash\n1,0.5," + store.hash() + "\n2,nan," + store.hash() + "\n");

  const auto m = nlohmann::json::parse(slurp(dir / "figure_4.manifest.json"));
  EXPECT_EQ(m["status"], "partial");
  EXPECT_EQ(m["config_hash"], store.hash());
  EXPECT_EQ(m["config"]["N"], 14);
  EXPECT_EQ(m["failures"][0]["kind"], "NoPeak");
  EXPECT_EQ(m["files"][0]["rows"], 2);
  EXPECT_EQ(m["epsilon"], -1.09);
  EXPECT_EQ(store.exit_code(), 2);
  fs::remove_all(dir);
}

TEST(Figures, UnknownIdRejected) {
  const auto dir = scratch("fig");
  Workspace ws(small_config(dir));
  try {
    run_figure("10", ws);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::UnknownFigure);
  }
  EXPECT_EQ(figure_ids().size(), 12u);
  fs::remove_all(dir);
}

TEST(Figures, SmallConfigIsDeterministic) {
  const auto dir = scratch("det");
  std::map<std::string, std::string> first;
  for (int pass = 0; pass < 2; ++pass) {
    // the second pass reads everything back from the cache
    Workspace ws(small_config(dir));
    ResultStore store(ws.config(), "det");
    for (const std::string id : {"1a", "2a", "4", "6"})
      for (const auto& t : run_figure(id, ws, &store)) {
        store.write(t);
        const auto text = slurp(store.dir() / t.file);
        if (pass == 0)
          first[t.file] = text;
        else
          EXPECT_EQ(text, first.at(t.file)) << t.file;
      }
    if (pass == 1) EXPECT_GT(ws.cache().hits(), 0u);
  }
  EXPECT_TRUE(first.count("fig4_fidelity.csv"));
  EXPECT_TRUE(first.count("fig6_entropy.csv"));
  fs::remove_all(dir);
}

}  // namespace
