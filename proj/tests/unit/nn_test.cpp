#include <cmath>
#include <fstream>

#include "helpers.hpp"

namespace fcr::nn {
namespace {

using fcr::testing::linear_model;
using fcr::testing::random_batch;
using fcr::testing::scratch_dir;

// ---------------------------------------------------------------------------
// forward
// ---------------------------------------------------------------------------

TEST(Forward, IdentityDenseReturnsInput) {
  Model m = linear_model(3, 3);
  auto& w = m.head_weight();
  std::fill(w.values.begin(), w.values.end(), 0.0f);
  for (std::size_t k = 0; k < 3; ++k) w.at(k, k) = 1.0f;
  std::fill(m.params(1).bias.values.begin(), m.params(1).bias.values.end(), 0.0f);
  Batch b{{3, 1, 1}, 1, {0.25, -1.5, 7.0}};
  const auto trace = forward(m, b);
  EXPECT_EQ(trace.logits(0)[0], 0.25);
  EXPECT_EQ(trace.logits(0)[1], -1.5);
  EXPECT_EQ(trace.logits(0)[2], 7.0);
}

TEST(Forward, ZeroInputGivesBias) {
  Model m = linear_model(4, 2);
  m.params(1).bias.values = {0.5f, -2.0f};
  Batch b{{4, 1, 1}, 1, std::vector<double>(4, 0.0)};
  const auto trace = forward(m, b);
  EXPECT_EQ(trace.logits(0)[0], 0.5);
  EXPECT_EQ(trace.logits(0)[1], -2.0);
}

TEST(Forward, ShapeMismatchThrows) {
  Model m = make_conv2net({1, 12, 12}, 3, 1, 8);
  Batch b{{1, 10, 10}, 1, std::vector<double>(100, 0.0)};
  try {
    forward(m, b);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InputShape);
  }
}

TEST(Forward, ActivationShapesFollowLayers) {
  Model m = make_conv2net({1, 28, 28}, 10, 1);
  Pcg32 rng(1);
  const auto b = random_batch(m.input_shape(), 2, rng);
  const auto trace = forward(m, b);
  ASSERT_EQ(trace.layer_count(), m.layer_count());
  for (std::size_t k = 0; k < m.layer_count(); ++k) EXPECT_EQ(trace.activation(k, 1).size(), m.shape_after(k).size());
  EXPECT_EQ(m.shape_after(1).size(), 8u * 26 * 26);
  EXPECT_EQ(m.feature_dim(), 64u);
  EXPECT_EQ(m.shape_before(7).size(), 16u * 5 * 5);
}

TEST(Forward, FirstOrderTaylor) {
  // logits(w + eps d) - logits(w) - eps J d = O(eps^2): halving eps quarters the residual.
  Pcg32 rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    Model m = make_mlp({5, 1, 1}, {7}, 3, 100 + trial);
    const auto b = random_batch(m.input_shape(), 1, rng);
    std::vector<double> dir(m.params(1).weight.size());
    for (double& d : dir) d = rng.normal();
    auto logits_at = [&](double eps) {
      Model p = m;
      for (std::size_t k = 0; k < dir.size(); ++k) {
        p.params(1).weight.values[k] = static_cast<float>(m.params(1).weight.values[k] + eps * dir[k]);
      }
      const auto t = forward(p, b);
      return std::vector<double>(t.logits(0).begin(), t.logits(0).end());
    };
    const auto base = logits_at(0.0);
    const auto a1 = logits_at(1e-2), a2 = logits_at(5e-3), b1 = logits_at(-1e-2), b2 = logits_at(-5e-3);
    // Second differences isolate the quadratic term; the central estimate of J d is eps-consistent.
    for (std::size_t j = 0; j < base.size(); ++j) {
      const double jd1 = (a1[j] - b1[j]) / 2e-2, jd2 = (a2[j] - b2[j]) / 1e-2;
      EXPECT_NEAR(jd1, jd2, 1e-4 * (1 + std::fabs(jd1)));
      const double r1 = std::fabs(a1[j] - base[j] - 1e-2 * jd1), r2 = std::fabs(a2[j] - base[j] - 5e-3 * jd1);
      EXPECT_LE(r2, 0.3 * r1 + 1e-6);
    }
  }
}

// ---------------------------------------------------------------------------
// gradients
// ---------------------------------------------------------------------------

TEST(Backward, AnalyticSoftmaxGradientForFinalLayer) {
  Model m = make_mlp({4, 1, 1}, {5}, 3, 9);
  Pcg32 rng(2);
  const auto b = random_batch(m.input_shape(), 1, rng);
  const std::vector<int> y{2};
  const auto result = loss_and_backward(m, b, y, m.final_layer());
  const auto t = forward(m, b);
  std::vector<double> p(3);
  ops::softmax(t.logits(0), p);
  const auto a = t.activation(m.final_layer() - 1, 0);
  for (std::size_t j = 0; j < 3; ++j) {
    for (std::size_t i = 0; i < 5; ++i) {
      const double expected = (p[j] - (j == 2 ? 1.0 : 0.0)) * a[i];
      EXPECT_NEAR(result.grads.samples[0][j * 5 + i], expected, 1e-15);
    }
  }
}

TEST(Backward, ConfidentPredictionHasVanishingGradient) {
  Model m = linear_model(2, 2);
  m.head_weight().values = {1000.0f, 0.0f, -1000.0f, 0.0f};
  Batch b{{2, 1, 1}, 1, {1.0, 0.5}};
  const std::vector<int> y{0};
  const auto r = loss_and_backward(m, b, y, 1);
  for (double g : r.grads.samples[0]) EXPECT_LT(std::fabs(g), 1e-300);
  EXPECT_LT(r.loss, 1e-300);
}

TEST(Backward, LabelOutOfRange) {
  Model m = linear_model(2, 2);
  Batch b{{2, 1, 1}, 1, {1.0, 0.5}};
  const std::vector<int> y{2};
  try {
    loss_and_backward(m, b, y, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Label);
  }
}

/// ReLU on/off pattern plus max-pool winners: finite differences only apply
/// when this is the same on both sides of the perturbation.
std::vector<std::size_t> kink_signature(const Model& m, const Batch& b) {
  Activations acts(m);
  std::copy(b.values.begin(), b.values.end(), acts.values[0].begin());
  forward_sample(m, acts);
  std::vector<std::size_t> sig;
  for (std::size_t k = 0; k < m.layer_count(); ++k) {
    if (std::holds_alternative<Relu>(m.layers()[k])) {
      for (double v : acts.values[k + 1]) sig.push_back(v > 0.0);
    } else if (const auto* pool = std::get_if<MaxPool>(&m.layers()[k])) {
      const auto in = m.shape_before(k), out = m.shape_after(k);
      for (std::size_t c = 0; c < out.channels; ++c)
        for (std::size_t y = 0; y < out.height; ++y)
          for (std::size_t x = 0; x < out.width; ++x) {
            std::size_t best = 0;
            double bv = -INFINITY;
            for (std::size_t dy = 0; dy < pool->k; ++dy)
              for (std::size_t dx = 0; dx < pool->k; ++dx) {
                const std::size_t idx = (c * in.height + y * pool->k + dy) * in.width + x * pool->k + dx;
                if (acts.values[k][idx] > bv) {
                  bv = acts.values[k][idx];
                  best = idx;
                }
              }
            sig.push_back(best);
          }
    }
  }
  return sig;
}

Model random_net(Pcg32& rng, std::uint64_t seed) {
  switch (rng.below(3)) {
    case 0: return make_mlp({static_cast<std::size_t>(2 + rng.below(6)), 1, 1}, {3 + rng.below(6)}, 2 + rng.below(4), seed);
    case 1:
      return make_mlp({static_cast<std::size_t>(2 + rng.below(4)), 1, 1}, {3 + rng.below(4), 2 + rng.below(4)},
                      2 + rng.below(3), seed);
    default: {
      std::vector<LayerSpec> layers{Conv2d{2, 3, 1}, Relu{}, MaxPool{2}, Flatten{}, Dense{2 * 3 * 3, 4}, Relu{},
                                    Dense{4, 3}};
      Model m({1, 8, 8}, layers);
      m.initialize(seed);
      return m;
    }
  }
}

TEST(Backward, MatchesCentralDifferences) {
  // 100 random (net, sample) pairs, every parameter, h = 1e-3. The step
  // actually taken is the float-representable one, so the quotient is exact
  // up to double rounding.
  constexpr double kH = 1e-3, kRelTol = 1e-3, kAbsFloor = 1e-6;
  Pcg32 rng(77);
  int checked_pairs = 0;
  std::size_t entries = 0, skipped = 0;
  double worst = 0.0;
  for (std::uint64_t trial = 0; checked_pairs < 100; ++trial) {
    Model m = random_net(rng, 1000 + trial);
    for (auto name : m.tensor_names()) {
      if (name.ends_with(".bias")) {
        for (float& v : m.tensor(name).values) v = static_cast<float>(0.1 * rng.normal());
      }
    }
    const auto b = random_batch(m.input_shape(), 1, rng);
    const std::vector<int> y{static_cast<int>(rng.below(static_cast<std::uint32_t>(m.num_classes())))};
    const auto [loss, grads] = batch_gradient(m, b, y);
    const auto sig = kink_signature(m, b);
    for (std::size_t k = 0; k < m.layer_count(); ++k) {
      if (!has_params(m.layers()[k])) continue;
      for (int part = 0; part < 2; ++part) {
        auto& tensor = part == 0 ? m.params(k).weight : m.params(k).bias;
        const auto& analytic = part == 0 ? grads.weight[k] : grads.bias[k];
        for (std::size_t n = 0; n < tensor.size(); ++n) {
          const float orig = tensor.values[n];
          const float up = static_cast<float>(orig + kH), down = static_cast<float>(orig - kH);
          tensor.values[n] = up;
          const bool smooth_up = kink_signature(m, b) == sig;
          const double lu = batch_loss(m, b, y);
          tensor.values[n] = down;
          const bool smooth_down = kink_signature(m, b) == sig;
          const double ld = batch_loss(m, b, y);
          tensor.values[n] = orig;
          if (!smooth_up || !smooth_down) {
            ++skipped;
            continue;
          }
          const double numeric = (lu - ld) / (static_cast<double>(up) - static_cast<double>(down));
          const double a = analytic[n];
          const double rel = std::fabs(a - numeric) / std::max({std::fabs(a), std::fabs(numeric), kAbsFloor});
          worst = std::max(worst, rel);
          EXPECT_LT(rel, kRelTol) << "layer " << k << " entry " << n << " analytic " << a << " numeric " << numeric;
          ++entries;
        }
      }
    }
    ++checked_pairs;
  }
  EXPECT_GT(entries, 3000u);
  EXPECT_LT(skipped, entries / 20);
  RecordProperty("worst_relative_error", std::to_string(worst));
}

TEST(Backward, PerSampleMeanEqualsBatchGradient) {
  Pcg32 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    Model m = random_net(rng, 300 + trial);
    const auto b = random_batch(m.input_shape(), 6, rng);
    std::vector<int> y(6);
    for (int& v : y) v = static_cast<int>(rng.below(static_cast<std::uint32_t>(m.num_classes())));
    for (std::size_t k = 0; k < m.layer_count(); ++k) {
      if (!has_params(m.layers()[k])) continue;
      const auto per = loss_and_backward(m, b, y, k);
      const auto [loss, grads] = batch_gradient(m, b, y);
      EXPECT_NEAR(per.loss, loss, 1e-12);
      ASSERT_EQ(per.grads.samples.size(), 6u);
      for (const auto& s : per.grads.samples) EXPECT_EQ(s.size(), m.params(k).weight.size());
      const auto mean = per.grads.mean();
      for (std::size_t n = 0; n < mean.size(); ++n) EXPECT_NEAR(mean[n], grads.weight[k][n], 1e-6);
    }
  }
}

// ---------------------------------------------------------------------------
// training
// ---------------------------------------------------------------------------

struct Toy {
  std::vector<double> x;
  std::vector<int> y;
  SampleSet view() const { return {{2, 1, 1}, {}, x, y}; }
};

Toy separable_toy(std::size_t n, std::uint64_t seed) {
  Pcg32 rng(seed);
  Toy t;
  while (t.y.size() < n) {
    const double a = rng.uniform() * 2 - 1, b = rng.uniform() * 2 - 1;
    if (std::fabs(a + b) < 0.1) continue;  // margin
    t.x.push_back(a);
    t.x.push_back(b);
    t.y.push_back(a + b > 0 ? 1 : 0);
  }
  return t;
}

TEST(Train, ZeroLearningRateLeavesParametersBitIdentical) {
  const auto toy = separable_toy(64, 1);
  Model m = make_mlp({2, 1, 1}, {4}, 2, 3);
  const Model before = m;
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.lr = 0.0;
  for (auto opt : {Optimizer::Sgd, Optimizer::Adam}) {
    cfg.optimizer = opt;
    train(m, toy.view(), cfg);
    EXPECT_TRUE(bit_identical(m, before));
  }
}

TEST(Train, SeparableToyReachesFullAccuracy) {
  const auto toy = separable_toy(200, 2);
  Model m = linear_model(2, 2, 4);
  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.lr = 0.05;
  cfg.batch_size = 16;
  cfg.optimizer = Optimizer::Sgd;
  const auto history = train(m, toy.view(), cfg);
  const auto pred = predict(m, toy.view());
  std::size_t hits = 0;
  for (std::size_t n = 0; n < pred.size(); ++n) hits += pred[n] == toy.y[n];
  EXPECT_EQ(hits, toy.y.size());
  EXPECT_EQ(history.epochs.size(), 200u);
}

TEST(Train, FrozenBackboneIsBitIdentical) {
  const auto ds = fcr::testing::quadrant_dataset(20, 4, 5);
  Model m = make_conv2net(ds.shape, 4, 6, 16);
  const Model before = m;
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.freeze = backbone_tensor_names(m);
  train(m, ds.view(), cfg);
  for (std::size_t k = 0; k < m.final_layer(); ++k) {
    EXPECT_EQ(m.params(k).weight, before.params(k).weight);
    EXPECT_EQ(m.params(k).bias, before.params(k).bias);
  }
  EXPECT_NE(m.head_weight(), before.head_weight());
}

TEST(Train, RandomFreezeMasks) {
  const auto toy = separable_toy(40, 8);
  Pcg32 rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    Model m = make_mlp({2, 1, 1}, {3, 3}, 2, 50 + trial);
    const Model before = m;
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.lr = 0.01;
    for (const auto& name : m.tensor_names()) {
      if (rng.bernoulli(0.5)) cfg.freeze.push_back(name);
    }
    train(m, toy.view(), cfg);
    for (const auto& name : cfg.freeze) EXPECT_EQ(m.tensor(name), before.tensor(name)) << name;
  }
}

TEST(Train, UnknownFreezeNameRejected) {
  const auto toy = separable_toy(8, 1);
  Model m = linear_model(2, 2);
  TrainConfig cfg;
  cfg.freeze = {"L9.weight"};
  EXPECT_THROW(train(m, toy.view(), cfg), Error);
}

TEST(Train, Deterministic) {
  const auto ds = fcr::testing::quadrant_dataset(15, 4, 9);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.seed = 17;
  Model a = make_conv2net(ds.shape, 4, 3, 16), b = make_conv2net(ds.shape, 4, 3, 16);
  train(a, ds.view(), cfg);
  train(b, ds.view(), cfg);
  EXPECT_TRUE(bit_identical(a, b));
  EXPECT_EQ(params_hash(a), params_hash(b));
}

TEST(Train, DivergenceCarriesLastFiniteState) {
  const auto toy = separable_toy(32, 3);
  Model m = linear_model(2, 2);
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.lr = 1e38;
  cfg.optimizer = Optimizer::Adam;  // step size ~lr even once the gradient vanishes
  try {
    train(m, toy.view(), cfg);
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Divergence);
    for (float v : e.last_finite().head_weight().values) EXPECT_TRUE(std::isfinite(v));
  }
}

// ---------------------------------------------------------------------------
// edits
// ---------------------------------------------------------------------------

TEST(EditWeight, SameValueIsNoOp) {
  Model m = make_mlp({3, 1, 1}, {4}, 2, 1);
  Model e = m;
  const auto rec = edit_weight(e, 3, 1, 2, m.head_weight().at(1, 2));
  EXPECT_TRUE(bit_identical(m, e));
  EXPECT_EQ(l0_distance(m, e), 0u);
  EXPECT_EQ(rec.old_value, rec.new_value);
}

TEST(EditWeight, L0DistanceCountsEdits) {
  Model m = make_mlp({3, 1, 1}, {4}, 2, 1);
  Model e = m;
  edit_weight(e, 3, 0, 1, 5.0f);
  EXPECT_EQ(l0_distance(m, e), 1u);
  edit_weight(e, 1, 2, 2, -5.0f);
  EXPECT_EQ(l0_distance(m, e), 2u);
}

TEST(EditWeight, OutOfRange) {
  Model m = make_mlp({3, 1, 1}, {4}, 2, 1);
  EXPECT_THROW(edit_weight(m, 3, 2, 0, 1.0f), Error);
  EXPECT_THROW(edit_weight(m, 3, 0, 4, 1.0f), Error);
  EXPECT_THROW(edit_weight(m, 2, 0, 0, 1.0f), Error);  // ReLU
}

// ---------------------------------------------------------------------------
// checkpoints
// ---------------------------------------------------------------------------

TEST(Checkpoint, RoundTripIsBitExact) {
  const auto dir = scratch_dir("ckpt");
  Model m = make_conv2net({1, 28, 28}, 10, 5);
  m.meta().class_names = {"a", "b", "c", "d", "e", "f", "g", "h", "i", "j"};
  m.head_weight().values[3] = -0.0f;
  const auto ck = save(m, dir);
  const Model back = load(dir);
  EXPECT_TRUE(bit_identical(m, back));
  EXPECT_EQ(back.meta().class_names, m.meta().class_names);
  EXPECT_EQ(back.meta().seed, 5u);
  EXPECT_EQ(ck.params_sha256, params_hash(back));
  EXPECT_EQ(std::filesystem::file_size(dir / "params.bin"), m.parameter_count() * 4);
}

TEST(Checkpoint, BlobIsLittleEndianFloat32InManifestOrder) {
  const auto dir = scratch_dir("ckpt");
  Model m = linear_model(2, 2);
  m.head_weight().values = {1.0f, -2.0f, 0.5f, 3.0f};
  m.params(1).bias.values = {0.25f, 0.0f};
  save(m, dir);
  std::ifstream in(dir / "params.bin", std::ios::binary);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), {});
  ASSERT_EQ(bytes.size(), 24u);
  EXPECT_EQ(bytes[0], 0x00);
  EXPECT_EQ(bytes[3], 0x3f);  // 1.0f = 0x3f800000
  EXPECT_EQ(bytes[7], 0xc0);  // -2.0f = 0xc0000000
  const auto manifest = read_manifest(dir);
  EXPECT_EQ(manifest["tensors"][1]["name"], "L1.bias");
  EXPECT_EQ(manifest["tensors"][1]["offset"], 16);
  EXPECT_EQ(manifest["rng"], "pcg32-xsh-rr");
}

TEST(Checkpoint, TruncatedBlobIsCorruption) {
  const auto dir = scratch_dir("ckpt");
  save(make_mlp({3, 1, 1}, {4}, 2, 1), dir);
  std::filesystem::resize_file(dir / "params.bin", std::filesystem::file_size(dir / "params.bin") - 4);
  try {
    load(dir);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Corruption);
  }
}

TEST(Checkpoint, FlippedBitIsCorruption) {
  const auto dir = scratch_dir("ckpt");
  save(make_mlp({3, 1, 1}, {4}, 2, 1), dir);
  std::fstream f(dir / "params.bin", std::ios::in | std::ios::out | std::ios::binary);
  f.seekp(5);
  f.put(0x55);
  f.close();
  try {
    load(dir);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Corruption);
  }
}

TEST(Checkpoint, UnknownArchIsUnsupported) {
  const auto dir = scratch_dir("ckpt");
  save(make_mlp({3, 1, 1}, {4}, 2, 1), dir);
  auto manifest = read_manifest(dir);
  manifest["arch"] = "resnet50";
  std::ofstream(dir / "manifest.json") << manifest.dump(2);
  try {
    load(dir);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::UnsupportedArch);
  }
}

TEST(Checkpoint, MissingDirectory) {
  try {
    load("/nonexistent/fcr/ckpt");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::MissingInput);
  }
}

TEST(Checkpoint, SameTrainingSameHash) {
  const auto ds = fcr::testing::quadrant_dataset(10, 4, 2);
  TrainConfig cfg;
  cfg.epochs = 1;
  std::string hashes[2];
  for (int k = 0; k < 2; ++k) {
    Model m = make_conv2net(ds.shape, 4, 3, 16);
    train(m, ds.view(), cfg);
    hashes[k] = save(m, scratch_dir("run" + std::to_string(k))).params_sha256;
  }
  EXPECT_EQ(hashes[0], hashes[1]);
}

}  // namespace
}  // namespace fcr::nn
