// Acceptance suite: runs every acceptance criterion at its stated tolerance
// and prints one PASS/FAIL line per criterion. Exit code = number of
// failures.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "nmpq/analysis.hpp"
#include "nmpq/data.hpp"
#include "nmpq/frozen.hpp"
#include "nmpq/io.hpp"
#include "nmpq/model.hpp"
#include "nmpq/training.hpp"

using nmpq::Matrix;
using nmpq::MlpModel;
using nmpq::QuantModeKind;

namespace {

struct Criterion {
  int id;
  std::string name;
  bool pass = true;
  std::string detail;
  double seconds = 0.0;
};

std::vector<Criterion> g_results;

template <typename F>
void run_criterion(int id, const std::string& name, F body) {
  Criterion c;
  c.id = id;
  c.name = name;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    body(c);
  } catch (const std::exception& e) {
    c.pass = false;
    c.detail += std::string(" exception: ") + e.what();
  }
  c.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("[%s] criterion %2d: %s — %s (%.1fs)\n", c.pass ? "PASS" : "FAIL", c.id,
              c.name.c_str(), c.detail.c_str(), c.seconds);
  std::fflush(stdout);
  g_results.push_back(c);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

nmpq::QuantConfig make_quant(QuantModeKind kind, double tau = 0.05, double ubits = 4.0,
                             double uact = 0.0) {
  nmpq::QuantConfig qc;
  qc.mode.kind = kind;
  qc.mode.uniform_bits = ubits;
  qc.mode.uniform_act_bits = uact;
  qc.tau = tau;
  return qc;
}

void scatter_strengths(MlpModel& m, std::uint64_t seed, double margin_taus) {
  nmpq::SeededRng rng(seed);
  const auto pick = [&](const nmpq::ThresholdLadder& ladder) {
    while (true) {
      const double s = rng.uniform();
      bool ok = true;
      for (double t : ladder.thresholds) {
        if (std::fabs(s - t) < margin_taus * ladder.tau) ok = false;
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

// --- criterion 1: gradient fidelity ---

void criterion_gradients(Criterion& c) {
  struct Case {
    const char* name;
    nmpq::QuantConfig qc;
  };
  const std::vector<Case> cases = {
      {"full_precision", make_quant(QuantModeKind::kFullPrecision, 0.02)},
      {"uniform_1", make_quant(QuantModeKind::kUniform, 0.02, 1.0)},
      {"uniform_ternary", make_quant(QuantModeKind::kUniform, 0.02, nmpq::kTernaryBits)},
      {"uniform_4", make_quant(QuantModeKind::kUniform, 0.02, 4.0)},
      {"uniform_8", make_quant(QuantModeKind::kUniform, 0.02, 8.0)},
      {"uniform_16", make_quant(QuantModeKind::kUniform, 0.02, 16.0)},
      {"uniform_1_act4", make_quant(QuantModeKind::kUniform, 0.02, 1.0, 4.0)},
      {"nmp_weights_only", make_quant(QuantModeKind::kNmpWeightsOnly, 0.02)},
      {"nmp_weights_acts", make_quant(QuantModeKind::kNmpWeightsActs, 0.02)},
  };
  double worst = 0.0;
  for (const auto& cs : cases) {
    MlpModel m = nmpq::build_model({6, 10, 1}, nmpq::Nonlinearity::kRelu, cs.qc.mode,
                                   cs.qc.resolve_weight_ladder(), cs.qc.resolve_act_ladder());
    nmpq::SeededRng rng(7001);
    nmpq::init_weights(m, rng);
    scatter_strengths(m, 7002, 4.0);
    const Matrix x = random_batch(12, 6, 7003);
    if (cs.qc.mode.quantizes_activations()) nmpq::init_alpha_from_batch(m, x);
    nmpq::Dataset batch;
    batch.task = nmpq::Task::kRegression;
    batch.features = x;
    nmpq::SeededRng trng(7004);
    for (std::size_t i = 0; i < x.rows; ++i) batch.targets.push_back(trng.normal());
    const nmpq::GradCheckReport rep = nmpq::gradient_check(m, batch);
    worst = std::max(worst, rep.max_rel_err);
    if (rep.max_rel_err >= 1e-4) {
      c.pass = false;
      c.detail += std::string(cs.name) + " rel err " + fmt(rep.max_rel_err) + "; ";
    }
  }
  c.detail = "max rel err over {W,bias,s,s_act,alpha} x 9 modes = " + fmt(worst) +
             " (tol 1e-4)" + c.detail;
}

// --- criterion 2: hard-forward invariance ---

void criterion_hard_forward(Criterion& c) {
  for (const auto kind : {QuantModeKind::kNmpWeightsOnly, QuantModeKind::kNmpWeightsActs}) {
    std::vector<MlpModel> models;
    for (double tau : {0.01, 0.05, 0.2}) {
      nmpq::QuantConfig qc = make_quant(kind, tau);
      MlpModel m = nmpq::build_model({8, 12, 12, 2}, nmpq::Nonlinearity::kRelu, qc.mode,
                                     qc.resolve_weight_ladder(), qc.resolve_act_ladder());
      nmpq::SeededRng rng(8001);
      nmpq::init_weights(m, rng);
      nmpq::SeededRng srng(8002);
      for (auto& layer : m.layers) {
        for (double& s : layer.weight_strengths) s = srng.uniform();
        for (double& s : layer.act_strengths) s = srng.uniform();
      }
      ++m.version;
      if (qc.mode.quantizes_activations()) {
        nmpq::init_alpha_from_batch(m, random_batch(32, 8, 8003));
      }
      models.push_back(std::move(m));
    }
    const nmpq::FrozenModel frozen = nmpq::freeze(models[0]);
    for (int b = 0; b < 100; ++b) {
      const Matrix x = random_batch(4, 8, 9000 + b);
      nmpq::ForwardTrace trace;
      const Matrix train_out = nmpq::forward(models[0], x, &trace);
      const Matrix infer_out = nmpq::forward(models[0], x, nullptr);
      const Matrix frozen_out = nmpq::frozen_forward(frozen, x);
      const Matrix tau2 = nmpq::forward(models[1], x, nullptr);
      const Matrix tau3 = nmpq::forward(models[2], x, nullptr);
      if (train_out.data != infer_out.data || train_out.data != frozen_out.data ||
          train_out.data != tau2.data || train_out.data != tau3.data) {
        c.pass = false;
        c.detail = "divergence at batch " + std::to_string(b);
        return;
      }
    }
  }
  c.detail = "train/infer/frozen bit-identical across tau in {0.01,0.05,0.2}, 100 batches";
}

// --- criterion 3: quantizer correctness ---

double mc_uniform_quantize(double z, int bits, double alpha) {
  const double step = alpha / static_cast<double>((1 << bits) - 1);
  const double cl = std::clamp(z, 0.0, alpha);
  return step * std::round(cl / step);
}

void criterion_quantizers(Criterion& c) {
  nmpq::SeededRng rng(3001);
  for (int bits : {1, 2, 4, 8, 16}) {
    for (int col_idx = 0; col_idx < 160; ++col_idx) {
      std::vector<double> col(64);
      for (double& v : col) v = rng.uniform(-2.0, 2.0);
      const nmpq::QuantizedColumn q = nmpq::quantize_weights(col, bits);
      const std::vector<double> levels = nmpq::weight_levels(bits, q.scale);
      for (std::size_t i = 0; i < col.size(); ++i) {
        if (q.values[i] != nmpq::nearest_level(col[i], levels)) {
          c.pass = false;
          c.detail = "oracle mismatch at bits " + std::to_string(bits);
          return;
        }
      }
    }
  }

  const std::size_t n = 1000000;
  std::string mse_detail;
  for (int bits : {2, 4, 8}) {
    nmpq::SeededRng mrng(3100 + bits);
    const double qmax = nmpq::weight_qmax(bits);
    const double scale = 1.0 / qmax;
    double mse = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double x = mrng.uniform(-1.0, 1.0);
      const double q = scale * std::clamp(std::round(x / scale), -qmax, qmax);
      mse += (q - x) * (q - x);
    }
    mse /= n;
    const double expected = scale * scale / 12.0;
    if (std::fabs(mse - expected) > 0.05 * expected) {
      c.pass = false;
      c.detail += "w" + std::to_string(bits) + " off; ";
    }
  }
  for (int bits : {4, 8}) {
    nmpq::SeededRng mrng(3200 + bits);
    const double alpha = 2.0;
    double mse = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double z = mrng.uniform(0.0, alpha);
      const double q = nmpq::quantize_activation_value(z, bits, alpha);
      mse += (q - z) * (q - z);
    }
    mse /= n;
    const double step = alpha / ((1 << bits) - 1);
    const double expected = step * step / 12.0;
    if (std::fabs(mse - expected) > 0.05 * expected) {
      c.pass = false;
      c.detail += "a" + std::to_string(bits) + " off; ";
    }
  }

  std::map<int, double> mse;
  for (int bits : {4, 5, 6}) {
    nmpq::SeededRng mrng(3300 + bits);
    double acc = 0.0;
    const double alpha = 2.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double z = mrng.uniform(0.0, alpha);
      const double q = mc_uniform_quantize(z, bits, alpha);
      acc += (q - z) * (q - z);
    }
    mse[bits] = acc / n;
  }
  const double r45 = mse[4] / mse[5];
  const double r56 = mse[5] / mse[6];
  if (r45 < 3.5 || r45 > 4.5 || r56 < 3.5 || r56 > 4.5) {
    c.pass = false;
    c.detail += "ratio out of band; ";
  }
  c.detail += "oracle exact on 1e4/bit-width; MSE within 5% of step^2/12; per-bit ratios " +
              fmt(r45) + ", " + fmt(r56) + " in [3.5,4.5]";
}

// --- criterion 4: initialization contract ---

void criterion_initialization(Criterion& c) {
  const nmpq::Dataset ds =
      nmpq::synth_tabular(nmpq::SyntheticKind::kRegressionNonlinear, 300, 6, 0.1, 41);
  nmpq::QuantConfig qc = make_quant(QuantModeKind::kNmpWeightsActs);
  nmpq::ModelConfig mc;
  mc.hidden = {16, 16};
  nmpq::TrainConfig tc;
  tc.epochs = 1;
  tc.patience = 1;
  tc.seeds = {1};
  tc.batch_size = 64;
  const nmpq::TrainResult res = nmpq::train(ds, mc, qc, tc);
  const double w1 = res.seeds[0].initial_weight_bits.fraction_at(1.0);
  const double a4 = res.seeds[0].initial_act_bits.fraction_at(4.0);
  c.pass = (w1 == 1.0) && (a4 == 1.0);
  c.detail = "epoch-0 weight bits at 1-bit: " + fmt(100.0 * w1) +
             "%, activation bits at 4-bit: " + fmt(100.0 * a4) + "%";
}

// --- criterion 5: proposition-2 loss-gap oracle ---

void criterion_loss_gap(Criterion& c) {
  int held = 0;
  const int bits_cycle[] = {1, 2, 4, 8};
  for (int trial = 0; trial < 100; ++trial) {
    nmpq::SeededRng rng(5100 + trial);
    const std::size_t d = 2 + (trial % 9);
    nmpq::RidgeProblem p;
    p.X = Matrix(40 + trial % 40, d);
    for (double& v : p.X.data) v = rng.normal();
    std::vector<double> w_true(d);
    for (double& v : w_true) v = rng.uniform(-2.0, 2.0);
    for (std::size_t i = 0; i < p.X.rows; ++i) {
      double y = 0.1 * rng.normal();
      for (std::size_t j = 0; j < d; ++j) y += p.X(i, j) * w_true[j];
      p.y.push_back(y);
    }
    p.lambda = 0.05 + 0.1 * rng.uniform();
    const std::vector<double> w_star = nmpq::ridge_solve(p);
    const double smooth = nmpq::symmetric_max_eigenvalue(nmpq::ridge_hessian(p));
    const nmpq::QuantizedColumn q = nmpq::quantize_weights(w_star, bits_cycle[trial % 4]);
    if (nmpq::loss_gap_check(p, q.values, w_star, smooth).holds) ++held;
  }
  c.pass = held == 100;
  c.detail = std::to_string(held) + "/100 ridge instances satisfy gap <= (L/2) rho_emp^2";
}

// --- criterion 6: epsilon/rho formulas ---

void criterion_epsilon(Criterion& c) {
  bool ok = nmpq::epsilon_bound(1.0, 2.0) == 1.0 / 48.0;
  for (double b : {1.0, 2.0, 3.0, 7.0, 12.0}) {
    ok = ok && nmpq::epsilon_bound(3.7, b) / nmpq::epsilon_bound(3.7, b + 1.0) == 4.0;
  }
  ok = ok && nmpq::epsilon_bound(0.0, 4.0) == 0.0;
  // rho arithmetic: d_in=4, sigma^2=3, b=1 -> rho = 1.
  nmpq::FrozenModel fm;
  nmpq::FrozenLayer layer;
  layer.d_in = 4;
  layer.d_out = 1;
  nmpq::FrozenNeuron n;
  n.bits = 1.0;
  n.scale = 1.0;
  n.codes.assign(4, 0);
  layer.neurons.push_back(n);
  fm.layers.push_back(layer);
  Matrix ref(4, 1);
  const double a = std::sqrt(3.0);
  ref(0, 0) = a;
  ref(1, 0) = a;
  ref(2, 0) = -a;
  ref(3, 0) = -a;
  const nmpq::RhoBound rb = nmpq::rho_bound(fm, {ref});
  ok = ok && std::fabs(rb.rho_formula - 1.0) < 1e-12;
  c.pass = ok;
  c.detail = "epsilon(1,2) = 1/48 exactly; factor-4 decay exact; rho arithmetic exact";
}

// --- criteria 7 and 8: desk-scale trends ---

struct DeskRuns {
  double fp_mse = 0.0;
  double nmp_w_mse = 0.0;
  double nmp_w_bits = 0.0;
  double nmp_wa_mse = 0.0;
  double nmp_wa_act_bits = 0.0;
  double uniform_1w4a_mse = 0.0;
  bool ready = false;
};

DeskRuns g_desk;

void run_desk_experiments() {
  const nmpq::Dataset ds =
      nmpq::synth_tabular(nmpq::SyntheticKind::kRegressionNonlinear, 5000, 16, 0.3, 20);
  nmpq::ModelConfig mc;
  mc.hidden = {64, 64, 64, 64};
  nmpq::TrainConfig tc;
  tc.lr = 1e-3;
  tc.epochs = 100;
  tc.patience = 20;
  tc.batch_size = 16;
  tc.seeds = {1, 2, 3};
  tc.split_seed = 20;  // one canonical split; seeds vary init and shuffling

  const auto mean_mse = [](const nmpq::TrainResult& r) {
    double m = 0.0;
    int n = 0;
    for (const auto& s : r.seeds) {
      if (!s.aborted) {
        m += s.test_metrics.mse;
        ++n;
      }
    }
    return n > 0 ? m / n : std::numeric_limits<double>::infinity();
  };

  const nmpq::TrainResult fp =
      nmpq::train(ds, mc, make_quant(QuantModeKind::kFullPrecision), tc);
  g_desk.fp_mse = mean_mse(fp);

  const nmpq::TrainResult nmp_w =
      nmpq::train(ds, mc, make_quant(QuantModeKind::kNmpWeightsOnly), tc);
  g_desk.nmp_w_mse = mean_mse(nmp_w);
  double bits = 0.0;
  for (const auto& s : nmp_w.seeds) bits += nmpq::bit_report(s.frozen).mean_weight_bits;
  g_desk.nmp_w_bits = bits / nmp_w.seeds.size();

  const nmpq::TrainResult nmp_wa =
      nmpq::train(ds, mc, make_quant(QuantModeKind::kNmpWeightsActs), tc);
  g_desk.nmp_wa_mse = mean_mse(nmp_wa);
  double abits = 0.0;
  for (const auto& s : nmp_wa.seeds) abits += nmpq::bit_report(s.frozen).mean_act_bits;
  g_desk.nmp_wa_act_bits = abits / nmp_wa.seeds.size();

  const nmpq::TrainResult uni =
      nmpq::train(ds, mc, make_quant(QuantModeKind::kUniform, 0.05, 1.0, 4.0), tc);
  g_desk.uniform_1w4a_mse = mean_mse(uni);
  g_desk.ready = true;
}

void criterion_desk_weights_only(Criterion& c) {
  if (!g_desk.ready) run_desk_experiments();
  const bool mse_ok = g_desk.nmp_w_mse <= 1.1 * g_desk.fp_mse;
  const bool bits_ok = g_desk.nmp_w_bits <= 3.0;
  c.pass = mse_ok && bits_ok;
  c.detail = "mse fp " + fmt(g_desk.fp_mse) + ", nmp-w " + fmt(g_desk.nmp_w_mse) + " (ratio " +
             fmt(g_desk.nmp_w_mse / g_desk.fp_mse) + " <= 1.1); mean weight bits " +
             fmt(g_desk.nmp_w_bits) + " <= 3.0";
}

void criterion_desk_weights_acts(Criterion& c) {
  if (!g_desk.ready) run_desk_experiments();
  const bool mse_ok = g_desk.nmp_wa_mse <= 1.5 * g_desk.fp_mse;
  const bool abits_ok = g_desk.nmp_wa_act_bits <= 6.0;
  const bool ordering_ok = g_desk.uniform_1w4a_mse >= g_desk.nmp_wa_mse;
  c.pass = mse_ok && abits_ok && ordering_ok;
  c.detail = "nmp-wa mse " + fmt(g_desk.nmp_wa_mse) + " (ratio " +
             fmt(g_desk.nmp_wa_mse / g_desk.fp_mse) + " <= 1.5); mean act bits " +
             fmt(g_desk.nmp_wa_act_bits) + " <= 6; uniform 1w/4a mse " +
             fmt(g_desk.uniform_1w4a_mse) + " >= nmp-wa";
}

// --- criterion 9: determinism and round-trip ---

void criterion_determinism(Criterion& c) {
  const nmpq::Dataset ds =
      nmpq::synth_tabular(nmpq::SyntheticKind::kRegressionNonlinear, 400, 6, 0.1, 91);
  nmpq::ModelConfig mc;
  mc.hidden = {12};
  nmpq::TrainConfig tc;
  tc.epochs = 5;
  tc.patience = 5;
  tc.seeds = {7};
  tc.batch_size = 64;
  const nmpq::QuantConfig qc = make_quant(QuantModeKind::kNmpWeightsActs);
  const nmpq::TrainResult a = nmpq::train(ds, mc, qc, tc);
  const nmpq::TrainResult b = nmpq::train(ds, mc, qc, tc);
  const nmpq::StandardizeStats& st = a.seeds[0].stats;
  const std::string ja = nmpq::frozen_to_json(a.seeds[0].frozen, "h", 7, "m", ds.task, 0, {},
                                              st)
                             .dump(2);
  const std::string jb = nmpq::frozen_to_json(b.seeds[0].frozen, "h", 7, "m", ds.task, 0, {},
                                              b.seeds[0].stats)
                             .dump(2);
  bool ok = ja == jb;

  const nmpq::LoadedFrozenModel loaded = [&] {
    const std::string path = "/tmp/nmpq_acceptance_frozen.json";
    nmpq::save_frozen(path, nmpq::frozen_to_json(a.seeds[0].frozen, "h", 7, "m", ds.task, 0,
                                                 {}, st));
    return nmpq::load_frozen(path);
  }();
  const std::string jc = nmpq::frozen_to_json(loaded.model, "h", 7, "m", ds.task, 0, {},
                                              loaded.stats)
                             .dump(2);
  ok = ok && (jc == ja);

  for (int i = 0; i < 20 && ok; ++i) {
    const Matrix x = random_batch(4, 6, 9200 + i);
    ok = nmpq::frozen_forward(loaded.model, x).data ==
         nmpq::frozen_forward(a.seeds[0].frozen, x).data;
  }
  c.pass = ok;
  c.detail = "repeat-train byte-identical; save/load/save byte-identical; frozen inference "
             "bit-exact";
}

// --- criterion 10: depth sweep ---

void criterion_depth_sweep(Criterion& c) {
  const nmpq::Dataset ds =
      nmpq::synth_tabular(nmpq::SyntheticKind::kClassificationMoons, 2000, 4, 0.15, 30);
  nmpq::TrainConfig tc;
  tc.lr = 1e-3;
  tc.epochs = 100;
  tc.patience = 20;
  tc.batch_size = 16;
  tc.seeds = {1, 2, 3};
  tc.split_seed = 30;
  const nmpq::QuantConfig qc = make_quant(QuantModeKind::kNmpWeightsOnly);
  std::vector<double> means, stds;
  std::string curve;
  for (int depth = 1; depth <= 4; ++depth) {
    nmpq::ModelConfig mc;
    mc.hidden.assign(depth, 32);
    const nmpq::TrainResult r = nmpq::train(ds, mc, qc, tc);
    double mean = 0.0, sd = 0.0;
    for (const auto& s : r.seeds) mean += s.test_metrics.accuracy;
    mean /= r.seeds.size();
    for (const auto& s : r.seeds) {
      sd += (s.test_metrics.accuracy - mean) * (s.test_metrics.accuracy - mean);
    }
    sd = std::sqrt(sd / r.seeds.size());
    means.push_back(mean);
    stds.push_back(sd);
    curve += fmt(mean) + "+-" + fmt(sd) + " ";
  }
  bool ok = true;
  for (std::size_t d = 0; d + 1 < means.size(); ++d) {
    if (means[d + 1] < means[d] - stds[d]) ok = false;
  }
  c.pass = ok;
  c.detail = "accuracy by depth 1..4: " + curve + "(non-decreasing within 1 std)";
}

}  // namespace

int main() {
  const auto t0 = std::chrono::steady_clock::now();

  run_criterion(1, "gradient fidelity (all modes, FD of soft-surrogate loss, 1e-4)",
                criterion_gradients);
  run_criterion(2, "hard-forward invariance across tau and train/infer/frozen paths",
                criterion_hard_forward);
  run_criterion(3, "quantizer correctness vs brute-force oracle + Monte Carlo MSE law",
                criterion_quantizers);
  run_criterion(4, "initialization contract (1-bit weights, 4-bit activations at epoch 0)",
                criterion_initialization);
  run_criterion(5, "proposition-2 loss-gap oracle on 100 ridge instances",
                criterion_loss_gap);
  run_criterion(6, "epsilon/rho formulas exact", criterion_epsilon);
  run_criterion(7, "desk-scale trend: NMP weights-only vs full precision",
                criterion_desk_weights_only);
  run_criterion(8, "desk-scale trend: NMP weights+acts and uniform ordering",
                criterion_desk_weights_acts);
  run_criterion(9, "determinism and frozen-model round-trip", criterion_determinism);
  run_criterion(10, "depth sweep: accuracy non-decreasing over 1..4 layers",
                criterion_depth_sweep);

  // Runtime limits stated by the criteria themselves.
  {
    Criterion c;
    c.id = 11;
    c.name = "runtime budget";
    const double total =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    double grad_s = 0.0, gap_s = 0.0, desk_s = 0.0;
    for (const auto& r : g_results) {
      if (r.id == 1) grad_s = r.seconds;
      if (r.id == 5) gap_s = r.seconds;
      if (r.id == 7 || r.id == 8) desk_s += r.seconds;
    }
    c.pass = grad_s < 30.0 && gap_s < 10.0 && desk_s < 300.0 && total < 540.0;
    c.detail = "gradient check " + fmt(grad_s) + "s (<30), loss-gap " + fmt(gap_s) +
               "s (<10), desk trends " + fmt(desk_s) + "s (<300), acceptance total " +
               fmt(total) + "s";
    std::printf("[%s] criterion %2d: %s — %s\n", c.pass ? "PASS" : "FAIL", c.id, c.name.c_str(),
                c.detail.c_str());
    g_results.push_back(c);
  }

  int failures = 0;
  for (const auto& r : g_results) failures += r.pass ? 0 : 1;
  std::printf("%d/%zu criteria passed\n", static_cast<int>(g_results.size()) - failures,
              g_results.size());
  return failures;
}
