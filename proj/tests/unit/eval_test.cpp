#include "helpers.hpp"

namespace fcr::eval {
namespace {

/// Four groups of ten (2 classes x 2 attribute values) with no images.
data::GroupedDataset four_groups() {
  data::GroupedDataset ds;
  ds.shape = {1, 1, 1};
  ds.num_classes = 2;
  ds.num_attribute_values = 2;
  ds.split = data::Split::Test;
  for (int g = 0; g < 4; ++g)
    for (int k = 0; k < 10; ++k) {
      ds.labels.push_back(g % 2);
      ds.attribute.push_back(g / 2);
      ds.pixels.push_back(0);
      ds.origin.push_back(ds.origin.size());
    }
  return ds;
}

std::vector<int> predictions_with_hits(const data::GroupedDataset& ds, const std::vector<int>& hits_per_group) {
  std::vector<int> seen(4, 0), pred(ds.size());
  for (std::size_t n = 0; n < ds.size(); ++n) {
    const int g = ds.group_id(n);
    const bool hit = seen[static_cast<std::size_t>(g)]++ < hits_per_group[static_cast<std::size_t>(g)];
    pred[n] = hit ? ds.labels[n] : 1 - ds.labels[n];
  }
  return pred;
}

TEST(Evaluate, PerfectClassifier) {
  const auto ds = four_groups();
  const auto r = evaluate_predictions(ds.labels, ds);
  EXPECT_EQ(r.average, 1.0);
  EXPECT_EQ(r.worst, 1.0);
  EXPECT_EQ(r.gap, 0.0);
  EXPECT_EQ(r.worst_group, 0);  // ties resolve to the lowest id
}

TEST(Evaluate, WorstGroupAndGap) {
  const auto ds = four_groups();
  const auto r = evaluate_predictions(predictions_with_hits(ds, {9, 8, 10, 5}), ds);
  EXPECT_EQ(r.worst, 0.5);
  EXPECT_EQ(r.worst_group, 3);
  EXPECT_EQ(r.average, 0.8);
  EXPECT_NEAR(r.gap, 0.3, 1e-15);
  EXPECT_EQ(r.per_group.at(1).correct, 8u);
  EXPECT_EQ(r.per_class[0].correct, 19u);
}

TEST(Evaluate, SingleGroupHasZeroGap) {
  auto ds = four_groups();
  std::vector<std::size_t> idx;
  for (std::size_t n = 0; n < ds.size(); ++n)
    if (ds.group_id(n) == 2) idx.push_back(n);
  const auto one = ds.subset(idx);
  const auto r = evaluate_predictions(predictions_with_hits(ds, {0, 0, 7, 0}), ds);
  const auto r1 = evaluate_predictions(std::vector<int>(one.labels.size(), 1), one);
  EXPECT_EQ(r1.worst, r1.average);
  EXPECT_EQ(r1.gap, 0.0);
  EXPECT_EQ(r.per_group.at(2).correct, 7u);
}

TEST(Evaluate, AverageIsWeightedMeanOfGroups) {
  Pcg32 rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    data::GroupedDataset ds;
    ds.shape = {1, 1, 1};
    ds.num_classes = 2 + rng.below(4);
    ds.num_attribute_values = 1 + rng.below(3);
    const std::size_t n = 1 + rng.below(300);
    std::vector<int> pred;
    for (std::size_t k = 0; k < n; ++k) {
      ds.labels.push_back(static_cast<int>(rng.below(static_cast<std::uint32_t>(ds.num_classes))));
      ds.attribute.push_back(static_cast<int>(rng.below(static_cast<std::uint32_t>(ds.num_attribute_values))));
      ds.pixels.push_back(0);
      ds.origin.push_back(k);
      pred.push_back(static_cast<int>(rng.below(static_cast<std::uint32_t>(ds.num_classes))));
    }
    const auto r = evaluate_predictions(pred, ds);
    double weighted = 0;
    std::size_t total = 0;
    for (const auto& [g, cell] : r.per_group) {
      weighted += static_cast<double>(cell.n) * cell.accuracy();
      total += cell.n;
      if (cell.n) {
        EXPECT_GE(cell.accuracy(), r.worst);
      }
    }
    EXPECT_EQ(total, n);
    EXPECT_NEAR(weighted / static_cast<double>(n), r.average, 1e-12);
    EXPECT_GE(r.gap, 0.0);
  }
}

TEST(Evaluate, UngroupedFallsBackToClasses) {
  auto ds = four_groups();
  ds.attribute.clear();
  ds.num_attribute_values = 0;
  std::vector<int> pred(ds.size(), 0);
  const auto r = evaluate_predictions(pred, ds);
  EXPECT_FALSE(r.grouped());
  EXPECT_EQ(r.worst_group, 1);
  EXPECT_EQ(r.worst, 0.0);
}

TEST(Evaluate, Errors) {
  const auto ds = four_groups();
  EXPECT_THROW(evaluate_predictions(std::vector<int>(3, 0), ds), Error);
  data::GroupedDataset empty;
  empty.num_classes = 2;
  try {
    evaluate_predictions(std::vector<int>{}, empty);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptySplit);
  }
}

TEST(Evaluate, IsPureAndMatchesHeadEvaluator) {
  const auto ds = fcr::testing::quadrant_dataset(10, 4, 2, data::Split::Test);
  const auto model = nn::make_conv2net(ds.shape, 4, 5, 8);
  const auto before = model;
  const auto a = evaluate(model, ds), b = evaluate(model, ds);
  EXPECT_EQ(a, b);
  EXPECT_TRUE(nn::bit_identical(before, model));
  EXPECT_EQ(HeadEvaluator(model, ds).evaluate(model), a);
}

// ---------------------------------------------------------------------------
// sweeps
// ---------------------------------------------------------------------------

struct Fixture {
  data::GroupedDataset ds = fcr::testing::quadrant_dataset(10, 4, 2, data::Split::Test);
  nn::Model model = nn::make_conv2net(ds.shape, 4, 5, 8);
  editor::EditTarget target{model.final_layer(), 1, 3};
};

TEST(Sweep, RateZeroMatchesUneditedModel) {
  Fixture f;
  const HeadEvaluator ev(f.model, f.ds);
  const std::vector<double> grid{0.0};
  const auto curve = sweep(f.model, f.target, grid, ev);
  ASSERT_EQ(curve.rows.size(), 1u);
  const auto base = evaluate(f.model, f.ds);
  EXPECT_EQ(curve.rows[0].average, base.average);
  EXPECT_EQ(curve.rows[0].worst, base.worst);
  EXPECT_EQ(curve.cell_ids, (std::vector<int>{0, 1, 2, 3}));
}

TEST(Sweep, RateOneMatchesOrthogonalizedModel) {
  Fixture f;
  const HeadEvaluator ev(f.model, f.ds);
  const std::vector<double> grid{0.0, 1.0};
  const auto curve = sweep(f.model, f.target, grid, ev);
  auto edited = f.model;
  editor::apply_pfn(edited, f.target, 1.0, nn::EditSource::Manual);
  EXPECT_EQ(curve.rows[1].average, evaluate(edited, f.ds).average);
  EXPECT_EQ(curve, sweep(f.model, f.target, grid, ev));
}

TEST(Sweep, RejectsBadGrids) {
  Fixture f;
  const HeadEvaluator ev(f.model, f.ds);
  for (const std::vector<double>& grid :
       {std::vector<double>{0.5, 0.2}, std::vector<double>{0.2, 0.2}, std::vector<double>{-0.1}, std::vector<double>{1.5}}) {
    try {
      sweep(f.model, f.target, grid, ev);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::UnsortedGrid);
      EXPECT_EQ(exit_code_for(e.kind()), 1);
    }
  }
}

// ---------------------------------------------------------------------------
// emitters
// ---------------------------------------------------------------------------

SweepCurve three_rows() {
  SweepCurve c;
  c.cell_ids = {0, 1, 2, 3};
  c.rows = {{0.0, 0.9, 0.7, 2, {0.95, 0.9, 0.7, 0.92}},
            {0.5, 0.85, 0.75, 2, {0.9, 0.88, 0.75, 0.8}},
            {1.0, 0.1 + 0.2, 1.0 / 3.0, 1, {0.4, 1.0 / 3.0, 0.5, 0.6}}};
  return c;
}

TEST(Emit, CurveCsvShape) {
  const auto csv = curve_csv(three_rows());
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "r,avg_acc,worst_acc,worst_group_id,acc_0,acc_1,acc_2,acc_3");
  EXPECT_EQ(curve_csv(SweepCurve{{0, 1}, {}}), "r,avg_acc,worst_acc,worst_group_id,acc_0,acc_1\n");
}

TEST(Emit, RoundTripsAreExact) {
  const auto c = three_rows();
  EXPECT_EQ(curve_from_csv(curve_csv(c)), c);
  EXPECT_EQ(curve_from_json(nlohmann::json::parse(curve_json(c).dump())), c);
  EXPECT_EQ(curve_csv(curve_from_json(nlohmann::json::parse(curve_json(c).dump()))), curve_csv(c));
  const auto empty = SweepCurve{{0, 1}, {}};
  EXPECT_EQ(curve_from_csv(curve_csv(empty)), empty);
}

TEST(Emit, ReportsRoundTrip) {
  const auto ds = four_groups();
  const auto r = evaluate_predictions(predictions_with_hits(ds, {9, 8, 10, 5}), ds);
  EXPECT_EQ(report_from_json(nlohmann::json::parse(report_json(r).dump())), r);
  const auto csv = report_csv(r);
  EXPECT_NE(csv.find("group_3,10,5,0.5\n"), std::string::npos);
  EXPECT_NE(csv.find("overall,40,32,0.80000000000000004\n"), std::string::npos);
}

TEST(Emit, ReEmissionIsByteIdentical) {
  const auto dir = fcr::testing::scratch_dir("emit");
  const auto c = three_rows();
  for (auto format : {ReportFormat::Csv, ReportFormat::Json}) {
    emit_report(c, dir / "a", format);
    emit_report(c, dir / "b", format);
    std::ifstream a(dir / "a", std::ios::binary), b(dir / "b", std::ios::binary);
    const std::string sa((std::istreambuf_iterator<char>(a)), {}), sb((std::istreambuf_iterator<char>(b)), {});
    EXPECT_EQ(sa, sb);
    EXPECT_FALSE(sa.empty());
  }
  EXPECT_THROW(report_format_from_string("xml"), Error);
}

TEST(Emit, MalformedInputs) {
  EXPECT_THROW(curve_from_csv(""), Error);
  EXPECT_THROW(curve_from_csv("a,b\n"), Error);
  EXPECT_THROW(curve_from_csv("r,avg_acc,worst_acc,worst_group_id\n0,x,1,0\n"), Error);
  EXPECT_THROW(curve_from_json(nlohmann::json::parse("{}")), Error);
}

TEST(Emit, SvgHasBothSeries) {
  const auto svg = curve_svg(three_rows(), "demo");
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_EQ(std::count(svg.begin(), svg.end(), '\n') > 0, true);
  std::size_t lines = 0;
  for (std::size_t p = svg.find("<polyline"); p != std::string::npos; p = svg.find("<polyline", p + 1)) ++lines;
  EXPECT_EQ(lines, 2u);
  EXPECT_NE(svg.find("demo"), std::string::npos);
}

}  // namespace
}  // namespace fcr::eval
