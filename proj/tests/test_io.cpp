#include <gtest/gtest.h>

#include <numbers>

#include "support.hpp"
#include "tipas/io.hpp"

using namespace tipas;
using namespace tipas::testing;

namespace {

ErrorKind load_error(const std::filesystem::path& p, const LoadOptions& opt = {}) {
  try {
    load_dataset(p, opt);
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::Internal;
}

std::string load_message(const std::filesystem::path& p) {
  try {
    load_dataset(p);
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(LoadDataset, JsonLinesSortedPerUser) {
  TempDir dir("io_jsonl");
  spit(dir / "d.jsonl",
       "{\"user\":\"u\",\"action\":\"pay\",\"t\":3.5}\n"
       "{\"user\":\"u\",\"action\":\"browse\",\"t\":1.0}\n"
       "\n"
       "{\"user\":\"u\",\"action\":\"browse\",\"t\":2.0}\n");
  const auto d = load_dataset(dir / "d.jsonl");
  ASSERT_EQ(d.histories.size(), 1u);
  const auto& ev = d.histories[0].events;
  ASSERT_EQ(ev.size(), 3u);
  EXPECT_EQ(ev[0].t, 1.0);
  EXPECT_EQ(ev[1].t, 2.0);
  EXPECT_EQ(ev[2].t, 3.5);
  EXPECT_EQ(d.actions, (std::vector<std::string>{"browse", "pay"}));
  EXPECT_EQ(ev[2].action, 1);
  EXPECT_EQ(d.stats.n_records, 3u);
  EXPECT_EQ(d.stats.n_blank_lines, 1u);
  EXPECT_GT(d.stats.n_reordered, 0u);
}

TEST(LoadDataset, CsvWithAnyColumnOrder) {
  TempDir dir("io_csv");
  spit(dir / "d.csv", "t,action,user\n2.0,b,v\n1.0,a,u\n0.5,b,u\n");
  const auto d = load_dataset(dir / "d.csv");
  ASSERT_EQ(d.histories.size(), 2u);
  EXPECT_EQ(d.histories[0].user, "u");
  EXPECT_EQ(d.histories[0].events[0], (EventRecord{1, 0.5}));
  EXPECT_EQ(d.histories[1].events[0], (EventRecord{1, 2.0}));
}

TEST(LoadDataset, MalformedRecordsNameTheLine) {
  TempDir dir("io_bad");
  spit(dir / "a.jsonl", "{\"user\":\"u\",\"action\":\"x\",\"t\":1}\n{\"user\":\"u\",\"t\":2}\n");
  EXPECT_EQ(load_error(dir / "a.jsonl"), ErrorKind::DataError);
  EXPECT_NE(load_message(dir / "a.jsonl").find("line 2"), std::string::npos);
  spit(dir / "b.jsonl", "{\"user\":\"u\",\"action\":\"x\",\"t\":-1}\n");
  EXPECT_EQ(load_error(dir / "b.jsonl"), ErrorKind::DataError);
  spit(dir / "c.jsonl", "not json\n");
  EXPECT_EQ(load_error(dir / "c.jsonl"), ErrorKind::DataError);
  spit(dir / "d.csv", "user,action,t\nu,x,1\nu,x\n");
  EXPECT_NE(load_message(dir / "d.csv").find("line 3"), std::string::npos);
  EXPECT_EQ(load_error(dir / "missing.jsonl"), ErrorKind::DataError);
}

TEST(LoadDataset, FixedVocabularyRejectsUnknownAction) {
  TempDir dir("io_vocab");
  spit(dir / "d.jsonl", "{\"user\":\"u\",\"action\":\"x\",\"t\":1}\n{\"user\":\"u\",\"action\":\"zz\",\"t\":2}\n");
  LoadOptions opt;
  opt.vocabulary = std::vector<std::string>{"x", "y"};
  EXPECT_EQ(load_error(dir / "d.jsonl", opt), ErrorKind::Vocabulary);
}

TEST(LoadDataset, IsoTimestampsWithAnchor) {
  EXPECT_DOUBLE_EQ(iso8601_hours_since("2024-03-01T06:30:00Z", "2024-02-28T00:00:00Z"), 54.5);
  EXPECT_DOUBLE_EQ(iso8601_hours_since("2024-01-01T02:00:00+02:00", "2024-01-01T00:00:00Z"), 0.0);
  TempDir dir("io_iso");
  spit(dir / "d.jsonl", "{\"user\":\"u\",\"action\":\"x\",\"t\":\"2024-01-02T12:00:00Z\"}\n");
  LoadOptions opt;
  opt.t0 = "2024-01-01T00:00:00Z";
  EXPECT_DOUBLE_EQ(load_dataset(dir / "d.jsonl", opt).histories[0].events[0].t, 36.0);
  EXPECT_EQ(load_error(dir / "d.jsonl"), ErrorKind::DataError);
}

TEST(LoadDataset, SaveRoundTrip) {
  TempDir dir("io_save");
  const Dataset data{{"a", {{0, 0.1}, {1, 1.0 / 3.0}}}, {"b", {{1, 7.25}}}};
  save_dataset(dir / "d.jsonl", data, {"x", "y"});
  const auto back = load_dataset(dir / "d.jsonl");
  ASSERT_EQ(back.histories.size(), 2u);
  EXPECT_EQ(back.histories[0].events, data[0].events);
  EXPECT_EQ(back.histories[1].events, data[1].events);
}

TEST(ModelFileIo, RoundTripIsBitExact) {
  Rng rng(5);
  ModelFile m{random_params(rng, 3, 2, {"u1", "u2"}), {"a", "b", "c"}, FitMetadata{7, 42, -123.456, true}};
  m.params.alpha(0, 0) = 0.1 + 0.2;
  m.params.theta(1, 2) = 5e-324;
  TempDir dir("io_model");
  save_model(dir / "m.json", m);
  const auto back = load_model(dir / "m.json");
  EXPECT_EQ(back.params.alpha, m.params.alpha);
  EXPECT_EQ(back.params.beta, m.params.beta);
  EXPECT_EQ(back.params.mu, m.params.mu);
  EXPECT_EQ(back.params.sigma, m.params.sigma);
  EXPECT_EQ(back.params.theta, m.params.theta);
  EXPECT_EQ(back.params.omega, m.params.omega);
  EXPECT_EQ(back.params.phi, m.params.phi);
  EXPECT_EQ(back.params.gamma, m.params.gamma);
  EXPECT_EQ(back.params.kappa, m.params.kappa);
  EXPECT_EQ(back.params.users, m.params.users);
  EXPECT_EQ(back.actions, m.actions);
  ASSERT_TRUE(back.fit);
  EXPECT_EQ(back.fit->iterations, 42);
  EXPECT_EQ(back.fit->final_log_likelihood, -123.456);
  EXPECT_EQ(back.params.user_slot("u2"), 1);
  EXPECT_EQ(slurp(dir / "m.json"), (save_model(dir / "m2.json", back), slurp(dir / "m2.json")));
}

TEST(ModelFileIo, VersionMismatchIsExplicit) {
  auto doc = model_to_json({ModelParams::zeros(small_structure(1, 1), {}), {"a"}, std::nullopt});
  doc["schema_version"] = 99;
  try {
    model_from_json(doc);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::UnsupportedVersion);
  }
  doc["schema_version"] = 1;
  doc["params"].erase("theta");
  EXPECT_THROW(model_from_json(doc), Error);
}

TEST(ExportParams, ShapeOneKernelIsExponentialCurve) {
  auto p = ModelParams::zeros(small_structure(1, 1), {});
  p.phi.setConstant(0.4);
  p.gamma.setConstant(0.2);
  p.kappa.setConstant(1.0);
  p.theta(0, 0) = 0.3;
  p.omega(0, 0) = 1.5;
  p.beta(0, 0) = 2.0;
  p.mu(0, 0) = 12.0;
  p.sigma(0, 0) = 2.0;
  TempDir dir("io_export");
  export_params({p, {"go"}, std::nullopt}, dir.path);

  std::istringstream lt(slurp(dir / "long_term_kernels.csv"));
  std::string line;
  std::getline(lt, line);
  EXPECT_EQ(line, "category,window_begin,window_end,action,delta_hours,value");
  int rows = 0;
  while (std::getline(lt, line)) {
    std::istringstream cells(line);
    std::string c, b, e, a, d, v;
    std::getline(cells, c, ',');
    std::getline(cells, b, ',');
    std::getline(cells, e, ',');
    std::getline(cells, a, ',');
    std::getline(cells, d, ',');
    std::getline(cells, v, ',');
    const double delta = std::stod(d);
    EXPECT_NEAR(std::stod(v), 0.4 * 0.2 * std::exp(-0.2 * delta), 1e-15);
    EXPECT_EQ(a, "go");
    ++rows;
  }
  EXPECT_EQ(rows, 4 * 288);

  const auto st = slurp(dir / "short_term_kernels.csv");
  EXPECT_EQ(st.substr(0, st.find('\n')), "source,target,delta_hours,value");
  const auto bg = slurp(dir / "background_densities.csv");
  const auto noon = bg.find("\ngo,12,");
  ASSERT_NE(noon, std::string::npos);
  EXPECT_NEAR(std::stod(bg.substr(noon + 7)), 2.0 / (2.0 * std::sqrt(2.0 * std::numbers::pi)), 1e-15);
}

TEST(SyntheticSpecIo, BundledSpecLoads) {
  const auto s = load_synthetic_spec(std::filesystem::path(TIPAS_SOURCE_DIR) / "data/synthetic_spec.json");
  EXPECT_EQ(s.spec.n_users, 30u);
  EXPECT_EQ(s.actions.size(), 3u);
  EXPECT_EQ(s.spec.params.alpha.rows(), 30);
  EXPECT_NO_THROW(s.spec.params.validate());
}

TEST(WriteAtomic, ReplacesWholeFile) {
  TempDir dir("io_atomic");
  write_atomic(dir / "f.txt", "first version that is long");
  write_atomic(dir / "f.txt", "second");
  EXPECT_EQ(slurp(dir / "f.txt"), "second");
  EXPECT_FALSE(std::filesystem::exists(dir / "f.txt.tmp"));
}
