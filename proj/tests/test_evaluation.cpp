#include <doctest.h>

#include <filesystem>
#include <random>

#include "mopflow/evaluation.hpp"

using namespace mopflow;

namespace {

BinaryMask mask_of(int h, int w, std::initializer_list<std::pair<int, int>> pixels) {
  BinaryMask m = BinaryMask::Constant(h, w, false);
  for (const auto& [y, x] : pixels) m(y, x) = true;
  return m;
}

}  // namespace

TEST_CASE("iou basics") {
  BinaryMask a = mask_of(4, 4, {{0, 0}, {1, 1}, {2, 2}});
  CHECK(iou(a, a) == 1.0);

  BinaryMask b = mask_of(4, 4, {{3, 3}, {3, 2}});
  CHECK(iou(a, b) == 0.0);

  BinaryMask empty = BinaryMask::Constant(4, 4, false);
  CHECK(iou(empty, empty) == 1.0);

  SUBCASE("offset 3x3 squares overlap at one half") {
    BinaryMask p = BinaryMask::Constant(8, 8, false);
    BinaryMask q = BinaryMask::Constant(8, 8, false);
    for (int y = 2; y < 5; ++y)
      for (int x = 2; x < 5; ++x) p(y, x) = true;
    for (int y = 2; y < 5; ++y)
      for (int x = 3; x < 6; ++x) q(y, x) = true;
    CHECK(iou(p, q) == 0.5);  // 6 / 12
  }

  SUBCASE("symmetry and union monotonicity") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 50; ++trial) {
      BinaryMask p(8, 8), q(8, 8);
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
          p(y, x) = (rng() & 1) != 0;
          q(y, x) = (rng() & 1) != 0;
        }
      CHECK(iou(p, q) == iou(q, p));
      const BinaryMask u = p || q;
      CHECK(iou(p, u) >= iou(p, q));
    }
  }

  SUBCASE("matches brute-force bit counting") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 1000; ++trial) {
      BinaryMask p(16, 16), q(16, 16);
      long inter = 0, uni = 0;
      for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) {
          p(y, x) = (rng() & 1) != 0;
          q(y, x) = (rng() & 1) != 0;
          inter += p(y, x) && q(y, x) ? 1 : 0;
          uni += p(y, x) || q(y, x) ? 1 : 0;
        }
      const double expect = uni == 0 ? 1.0 : static_cast<double>(inter) / uni;
      CHECK(iou(p, q) == expect);
    }
  }

  CHECK_THROWS_AS(iou(BinaryMask::Constant(3, 3, false), BinaryMask::Constant(3, 4, false)),
                  std::invalid_argument);
}

TEST_CASE("evaluate_sequence") {
  const BinaryMask gt = mask_of(4, 4, {{1, 1}, {1, 2}});

  SUBCASE("perfect predictions score one") {
    CHECK(evaluate_sequence({gt, gt, gt}, {gt, gt, gt}) == 1.0);
  }

  SUBCASE("alternating hit and miss averages to one half") {
    const BinaryMask miss = mask_of(4, 4, {{3, 3}, {3, 0}});
    CHECK(evaluate_sequence({gt, miss}, {gt, gt}) == 0.5);
  }

  SUBCASE("three frames with IoUs 0.5, 0.5, 1.0") {
    const BinaryMask half = mask_of(4, 4, {{1, 1}});  // subset of gt: 1/2
    const double score = evaluate_sequence({half, half, gt}, {gt, gt, gt});
    CHECK(score == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  }

  CHECK_THROWS_AS(evaluate_sequence({gt}, {gt, gt}), std::invalid_argument);
}

TEST_CASE("evaluate_dataset") {
  const BinaryMask gt5 = mask_of(4, 4, {{0, 0}, {0, 1}, {0, 2}, {0, 3}, {1, 0}});

  SUBCASE("single perfect sequence") {
    const EvalReport report = evaluate_dataset({{"alpha", {{gt5}, {gt5}}}});
    CHECK(report.mean_iou == 1.0);
    CHECK(report.per_sequence.at("alpha") == 1.0);
    const std::string table = render_table(report);
    CHECK(table.find("PCM") != std::string::npos);
    CHECK(table.find("40.1") != std::string::npos);
    CHECK(table.find("PaperOurs") != std::string::npos);
    CHECK(table.find("41.9") != std::string::npos);
  }

  SUBCASE("two sequences averaging 0.4") {
    const BinaryMask one = mask_of(4, 4, {{0, 0}});                       // 1/5 of gt5
    const BinaryMask three = mask_of(4, 4, {{0, 0}, {0, 1}, {0, 2}});     // 3/5 of gt5
    const EvalReport report =
        evaluate_dataset({{"a", {{one}, {gt5}}}, {"b", {{three}, {gt5}}}});
    CHECK(report.per_sequence.at("a") == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(report.per_sequence.at("b") == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(report.mean_iou == doctest::Approx(0.4).epsilon(1e-12));
  }

  SUBCASE("baseline constants are exactly the reference set") {
    const auto& bs = EvalReport::baselines();
    REQUIRE(bs.size() == 6);
    CHECK(bs[0] == std::pair<std::string, double>{"PCM", 40.1});
    CHECK(bs[1] == std::pair<std::string, double>{"CVOS", 48.2});
    CHECK(bs[2] == std::pair<std::string, double>{"KEY", 49.8});
    CHECK(bs[3] == std::pair<std::string, double>{"NLC", 55.1});
    CHECK(bs[4] == std::pair<std::string, double>{"FST", 55.8});
    CHECK(bs[5] == std::pair<std::string, double>{"PaperOurs", 41.9});
  }

  CHECK_THROWS_AS(evaluate_dataset({}), std::invalid_argument);
}

TEST_CASE("report csv round trip") {
  namespace fs = std::filesystem;
  EvalReport report;
  report.per_sequence = {{"bear", 0.123456789012345}, {"bus", 0.98765432109}};
  report.mean_iou = (report.per_sequence["bear"] + report.per_sequence["bus"]) / 2.0;

  const fs::path dir = fs::temp_directory_path() / "mopflow_eval_test";
  fs::create_directories(dir);
  const fs::path path = dir / "report.csv";
  write_report_csv(path, report);
  const EvalReport loaded = read_report_csv(path);
  CHECK(loaded.per_sequence.size() == 2);
  CHECK(loaded.per_sequence.at("bear") == report.per_sequence.at("bear"));
  CHECK(loaded.per_sequence.at("bus") == report.per_sequence.at("bus"));
  CHECK(loaded.mean_iou == report.mean_iou);
  fs::remove_all(dir);
}
