#include <gtest/gtest.h>

#include <cmath>

#include "nmpq/analysis.hpp"
#include "nmpq/frozen.hpp"
#include "nmpq/model.hpp"
#include "nmpq/training.hpp"

using nmpq::Matrix;
using nmpq::MlpModel;
using nmpq::QuantModeKind;

namespace {

nmpq::QuantConfig make_quant(QuantModeKind kind, double tau = 0.02, double ubits = 4.0,
                             double uact = 0.0) {
  nmpq::QuantConfig qc;
  qc.mode.kind = kind;
  qc.mode.uniform_bits = ubits;
  qc.mode.uniform_act_bits = uact;
  qc.tau = tau;
  return qc;
}

MlpModel make_model(const std::vector<std::size_t>& dims, const nmpq::QuantConfig& qc,
                    std::uint64_t seed) {
  MlpModel m = nmpq::build_model(dims, nmpq::Nonlinearity::kRelu, qc.mode,
                                 qc.resolve_weight_ladder(), qc.resolve_act_ladder());
  nmpq::SeededRng rng(seed);
  nmpq::init_weights(m, rng);
  return m;
}

// Scatter strengths across bands, keeping them >= 4 tau away from thresholds.
void scatter_strengths(MlpModel& m, std::uint64_t seed) {
  nmpq::SeededRng rng(seed);
  const auto pick = [&](const nmpq::ThresholdLadder& ladder) {
    while (true) {
      const double s = rng.uniform();
      bool ok = true;
      for (double t : ladder.thresholds) {
        if (std::fabs(s - t) < 4.0 * ladder.tau) ok = false;
      }
      if (ok) return s;
    }
  };
  for (auto& layer : m.layers) {
    for (double& s : layer.weight_strengths) s = pick(m.weight_ladder);
    for (double& s : layer.act_strengths) s = pick(m.act_ladder);
  }
  ++m.version;
}

Matrix random_batch(std::size_t n, std::size_t d, std::uint64_t seed) {
  nmpq::SeededRng rng(seed);
  Matrix x(n, d);
  for (double& v : x.data) v = rng.normal();
  return x;
}

nmpq::Dataset regression_batch(const Matrix& x, std::uint64_t seed) {
  nmpq::SeededRng rng(seed);
  nmpq::Dataset ds;
  ds.task = nmpq::Task::kRegression;
  ds.features = x;
  for (std::size_t i = 0; i < x.rows; ++i) ds.targets.push_back(rng.normal());
  return ds;
}

}  // namespace

TEST(Forward, FullPrecisionIdentityNetwork) {
  nmpq::QuantConfig qc = make_quant(QuantModeKind::kFullPrecision);
  MlpModel m = nmpq::build_model({3, 3}, nmpq::Nonlinearity::kIdentity, qc.mode,
                                 qc.resolve_weight_ladder(), qc.resolve_act_ladder());
  m.layers[0].W = Matrix::identity(3);
  ++m.version;
  const Matrix x = random_batch(5, 3, 1);
  const Matrix out = nmpq::forward(m, x, nullptr);
  EXPECT_EQ(out.data, x.data);
}

TEST(Forward, OneBitSingleNeuronDotProduct) {
  nmpq::QuantConfig qc = make_quant(QuantModeKind::kUniform, 0.05, 1.0);
  MlpModel m = nmpq::build_model({2, 1}, nmpq::Nonlinearity::kIdentity, qc.mode,
                                 qc.resolve_weight_ladder(), qc.resolve_act_ladder());
  m.layers[0].W(0, 0) = 0.5;
  m.layers[0].W(1, 0) = -0.3;
  ++m.version;
  Matrix x(1, 2);
  x(0, 0) = x(0, 1) = 1.0;
  const Matrix out = nmpq::forward(m, x, nullptr);
  // quantized weights are (0.4, -0.4): pre-activation 0.4 - 0.4 = 0
  EXPECT_DOUBLE_EQ(out(0, 0), 0.0);
}

TEST(Forward, ShapeMismatchThrows) {
  nmpq::QuantConfig qc = make_quant(QuantModeKind::kFullPrecision);
  MlpModel m = make_model({4, 2}, qc, 3);
  EXPECT_THROW(nmpq::forward(m, Matrix(1, 3), nullptr), std::invalid_argument);
}

TEST(Forward, TrainAndInferPathsBitIdentical) {
  nmpq::QuantConfig qc = make_quant(QuantModeKind::kNmpWeightsActs, 0.05);
  MlpModel m = make_model({6, 8, 8, 1}, qc, 11);
  scatter_strengths(m, 12);
  nmpq::init_alpha_from_batch(m, random_batch(32, 6, 13));
  for (int b = 0; b < 100; ++b) {
    const Matrix x = random_batch(4, 6, 100 + b);
    nmpq::ForwardTrace trace;
    const Matrix train_out = nmpq::forward(m, x, &trace);
    const Matrix infer_out = nmpq::forward(m, x, nullptr);
    ASSERT_EQ(train_out.data, infer_out.data);
  }
}

TEST(Forward, OutputIndependentOfTau) {
  for (const auto kind : {QuantModeKind::kNmpWeightsOnly, QuantModeKind::kNmpWeightsActs}) {
    std::vector<Matrix> outs;
    for (double tau : {0.01, 0.05, 0.2}) {
      nmpq::QuantConfig qc = make_quant(kind, tau);
      MlpModel m = make_model({5, 7, 1}, qc, 21);
      nmpq::SeededRng srng(22);
      for (auto& layer : m.layers) {
        for (double& s : layer.weight_strengths) s = srng.uniform();
        for (double& s : layer.act_strengths) s = srng.uniform();
      }
      ++m.version;
      if (qc.mode.quantizes_activations()) {
        nmpq::init_alpha_from_batch(m, random_batch(16, 5, 23));
      }
      outs.push_back(nmpq::forward(m, random_batch(8, 5, 24), nullptr));
    }
    ASSERT_EQ(outs[0].data, outs[1].data);
    ASSERT_EQ(outs[0].data, outs[2].data);
  }
}

TEST(Backward, GradientCheckAcrossModes) {
  struct Case {
    const char* name;
    nmpq::QuantConfig qc;
  };
  const std::vector<Case> cases = {
      {"full_precision", make_quant(QuantModeKind::kFullPrecision)},
      {"uniform_1", make_quant(QuantModeKind::kUniform, 0.02, 1.0)},
      {"uniform_ternary", make_quant(QuantModeKind::kUniform, 0.02, nmpq::kTernaryBits)},
      {"uniform_4", make_quant(QuantModeKind::kUniform, 0.02, 4.0)},
      {"uniform_8_act4", make_quant(QuantModeKind::kUniform, 0.02, 8.0, 4.0)},
      {"nmp_weights_only", make_quant(QuantModeKind::kNmpWeightsOnly, 0.02)},
      {"nmp_weights_acts", make_quant(QuantModeKind::kNmpWeightsActs, 0.02)},
  };
  for (const auto& c : cases) {
    MlpModel m = make_model({5, 8, 1}, c.qc, 31);
    scatter_strengths(m, 32);
    const Matrix x = random_batch(12, 5, 33);
    if (c.qc.mode.quantizes_activations()) nmpq::init_alpha_from_batch(m, x);
    const nmpq::Dataset batch = regression_batch(x, 34);
    const nmpq::GradCheckReport report = nmpq::gradient_check(m, batch);
    EXPECT_LT(report.max_rel_err, 1e-4) << c.name;
    for (const auto& entry : report.classes) {
      if (entry.param_class == "W" || entry.param_class == "bias") {
        EXPECT_GT(entry.checked, 0u) << c.name << " " << entry.param_class;
      }
    }
  }
}

TEST(Backward, WeightGradientHoldsAtFinerStep) {
  // The weight and strength paths stay within tolerance at step 1e-6 as well.
  nmpq::QuantConfig qc = make_quant(QuantModeKind::kNmpWeightsOnly, 0.02);
  MlpModel m = make_model({5, 8, 1}, qc, 31);
  scatter_strengths(m, 32);
  const Matrix x = random_batch(12, 5, 33);
  nmpq::GradCheckOptions opt;
  opt.step = 1e-6;
  const nmpq::GradCheckReport report = nmpq::gradient_check(m, regression_batch(x, 34), opt);
  for (const auto& entry : report.classes) {
    if (entry.param_class == "W" || entry.param_class == "s") {
      EXPECT_LT(entry.max_rel_err, 1e-4) << entry.param_class;
    }
  }
}

TEST(Backward, FullPrecisionGradCheckIsTight) {
  nmpq::QuantConfig qc = make_quant(QuantModeKind::kFullPrecision);
  MlpModel m = make_model({4, 6, 1}, qc, 41);
  const Matrix x = random_batch(10, 4, 42);
  const nmpq::GradCheckReport report = nmpq::gradient_check(m, regression_batch(x, 43));
  EXPECT_LT(report.max_rel_err, 1e-7);
}

TEST(Backward, FullPrecisionMatchesPlainBackprop) {
  nmpq::QuantConfig qc = make_quant(QuantModeKind::kFullPrecision);
  MlpModel m = make_model({4, 6, 2}, qc, 51);
  const Matrix x = random_batch(8, 4, 52);
  nmpq::ForwardTrace trace;
  const Matrix out = nmpq::forward(m, x, &trace);
  nmpq::SeededRng rng(53);
  Matrix g(out.rows, out.cols);
  for (double& v : g.data) v = rng.normal();
  const nmpq::GradientSet grads = nmpq::backward(m, trace, g);

  // Independent plain-MLP backprop.
  const Matrix& w1 = m.layers[0].W;
  const Matrix& w2 = m.layers[1].W;
  Matrix y1(x.rows, w1.cols, 0.0);
  for (std::size_t i = 0; i < x.rows; ++i) {
    for (std::size_t j = 0; j < w1.cols; ++j) {
      double acc = m.layers[0].bias[j];
      for (std::size_t k = 0; k < x.cols; ++k) acc += x(i, k) * w1(k, j);
      y1(i, j) = acc;
    }
  }
  Matrix z1(y1.rows, y1.cols);
  for (std::size_t i = 0; i < y1.data.size(); ++i) z1.data[i] = std::max(0.0, y1.data[i]);
  Matrix d1(x.rows, w1.cols, 0.0);
  Matrix dw2(w2.rows, w2.cols, 0.0);
  std::vector<double> db2(w2.cols, 0.0);
  for (std::size_t i = 0; i < x.rows; ++i) {
    for (std::size_t j = 0; j < w2.cols; ++j) {
      db2[j] += g(i, j);
      for (std::size_t k = 0; k < w2.rows; ++k) dw2(k, j) += z1(i, k) * g(i, j);
    }
    for (std::size_t k = 0; k < w2.rows; ++k) {
      double acc = 0.0;
      for (std::size_t j = 0; j < w2.cols; ++j) acc += g(i, j) * w2(k, j);
      d1(i, k) = acc * (y1(i, k) > 0.0 ? 1.0 : 0.0);
    }
  }
  Matrix dw1(w1.rows, w1.cols, 0.0);
  std::vector<double> db1(w1.cols, 0.0);
  for (std::size_t i = 0; i < x.rows; ++i) {
    for (std::size_t j = 0; j < w1.cols; ++j) {
      db1[j] += d1(i, j);
      for (std::size_t k = 0; k < x.cols; ++k) dw1(k, j) += x(i, k) * d1(i, j);
    }
  }
  for (std::size_t i = 0; i < dw2.data.size(); ++i) {
    EXPECT_NEAR(grads.layers[1].dW.data[i], dw2.data[i], 1e-12);
  }
  for (std::size_t j = 0; j < db2.size(); ++j) {
    EXPECT_NEAR(grads.layers[1].dbias[j], db2[j], 1e-12);
  }
  for (std::size_t i = 0; i < dw1.data.size(); ++i) {
    EXPECT_NEAR(grads.layers[0].dW.data[i], dw1.data[i], 1e-12);
  }
  for (std::size_t j = 0; j < db1.size(); ++j) {
    EXPECT_NEAR(grads.layers[0].dbias[j], db1[j], 1e-12);
  }
}

TEST(Backward, InputGradientMatchesHardForwardDifferences) {
  // Weights-only quantization: the hard forward is piecewise linear in the
  // input, so off the relu kinks finite differences of the hard forward must
  // match the propagated input gradient.
  nmpq::QuantConfig qc = make_quant(QuantModeKind::kUniform, 0.05, 4.0);
  MlpModel m = make_model({4, 6, 1}, qc, 61);
  Matrix x = random_batch(3, 4, 62);
  nmpq::ForwardTrace trace;
  Matrix out = nmpq::forward(m, x, &trace);
  // Keep clear of relu kinks.
  for (double y : trace.layers[0].pre_act.data) ASSERT_GT(std::fabs(y), 1e-4);

  Matrix g(out.rows, out.cols, 1.0);
  const nmpq::GradientSet grads = nmpq::backward(m, trace, g);
  const double h = 1e-6;
  for (std::size_t i = 0; i < x.rows; ++i) {
    for (std::size_t j = 0; j < x.cols; ++j) {
      Matrix xp = x, xm = x;
      xp(i, j) += h;
      xm(i, j) -= h;
      double lp = 0.0, lm = 0.0;
      const Matrix op = nmpq::forward(m, xp, nullptr);
      const Matrix om = nmpq::forward(m, xm, nullptr);
      for (double v : op.data) lp += v;
      for (double v : om.data) lm += v;
      const double fd = (lp - lm) / (2.0 * h);
      const double an = grads.input_grad(i, j);
      const double denom = std::max({std::fabs(fd), std::fabs(an), 1e-9});
      EXPECT_LT(std::fabs(fd - an) / denom, 1e-5) << i << "," << j;
    }
  }
}

TEST(Backward, AlphaGradientZeroWhenNothingClips) {
  nmpq::QuantConfig qc = make_quant(QuantModeKind::kNmpWeightsActs, 0.05);
  MlpModel m = make_model({4, 6, 1}, qc, 71);
  for (auto& layer : m.layers) {
    for (double& a : layer.alpha) a = 100.0;  // far above any activation
  }
  ++m.version;
  const Matrix x = random_batch(8, 4, 72);
  nmpq::ForwardTrace trace;
  const Matrix out = nmpq::forward(m, x, &trace);
  Matrix g(out.rows, out.cols, 1.0);
  const nmpq::GradientSet grads = nmpq::backward(m, trace, g);
  for (double v : grads.layers[0].dalpha) EXPECT_EQ(v, 0.0);
}

TEST(Backward, StaleTraceThrows) {
  nmpq::QuantConfig qc = make_quant(QuantModeKind::kNmpWeightsOnly, 0.05);
  MlpModel m = make_model({4, 4, 1}, qc, 81);
  const Matrix x = random_batch(4, 4, 82);
  nmpq::ForwardTrace trace;
  const Matrix out = nmpq::forward(m, x, &trace);
  Matrix g(out.rows, out.cols, 1.0);
  nmpq::GradientSet grads = nmpq::backward(m, trace, g);
  nmpq::sgd_step(m, grads, 1e-3);  // bumps version
  EXPECT_THROW(nmpq::backward(m, trace, g), std::runtime_error);
}

TEST(Freeze, InferenceBitExactAgainstLiveModel) {
  for (const auto kind : {QuantModeKind::kNmpWeightsOnly, QuantModeKind::kNmpWeightsActs,
                          QuantModeKind::kFullPrecision}) {
    nmpq::QuantConfig qc = make_quant(kind, 0.05);
    MlpModel m = make_model({6, 8, 2}, qc, 91);
    nmpq::SeededRng srng(92);
    for (auto& layer : m.layers) {
      for (double& s : layer.weight_strengths) s = srng.uniform();
      for (double& s : layer.act_strengths) s = srng.uniform();
    }
    ++m.version;
    if (qc.mode.quantizes_activations()) {
      nmpq::init_alpha_from_batch(m, random_batch(16, 6, 93));
    }
    const nmpq::FrozenModel fm = nmpq::freeze(m);
    for (int b = 0; b < 100; ++b) {
      const Matrix x = random_batch(3, 6, 200 + b);
      const Matrix live = nmpq::forward(m, x, nullptr);
      const Matrix frozen = nmpq::frozen_forward(fm, x);
      ASSERT_EQ(live.data, frozen.data);
    }
  }
}

TEST(Freeze, LowStrengthFreezesToOneBit) {
  nmpq::QuantConfig qc = make_quant(QuantModeKind::kNmpWeightsOnly, 0.05);
  MlpModel m = make_model({4, 2, 1}, qc, 95);
  for (auto& layer : m.layers) {
    for (double& s : layer.weight_strengths) s = 0.1;
  }
  ++m.version;
  const nmpq::FrozenModel fm = nmpq::freeze(m);
  for (const auto& layer : fm.layers) {
    for (const auto& n : layer.neurons) EXPECT_EQ(n.bits, 1.0);
  }
}

TEST(Freeze, IntegerCodesWithinRange) {
  nmpq::QuantConfig qc = make_quant(QuantModeKind::kNmpWeightsOnly, 0.05);
  MlpModel m = make_model({16, 12, 4}, qc, 97);
  nmpq::SeededRng srng(98);
  for (auto& layer : m.layers) {
    for (double& s : layer.weight_strengths) s = srng.uniform();
  }
  ++m.version;
  const nmpq::FrozenModel fm = nmpq::freeze(m);
  for (const auto& layer : fm.layers) {
    for (const auto& n : layer.neurons) {
      const int b = static_cast<int>(std::lround(n.bits));
      const int limit = std::max(1, (1 << (b - 1)) - 1);
      for (std::int32_t code : n.codes) {
        ASSERT_LE(std::abs(code), limit) << "bits=" << b;
      }
    }
  }
}
