#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "bag/adapt.hpp"
#include "bag/matrix.hpp"
#include "bag/model.hpp"
#include "bag/rng.hpp"
#include "bag/scm.hpp"

using namespace bag;
using namespace bag::adapt;

namespace {

BagModel small_model(std::uint64_t seed = 1) {
  Rng rng(seed);
  return make_bag_model(/*n_x=*/4, /*n_c=*/2, /*n_b=*/2, /*n_classes=*/2,
                        /*n_experts=*/2, /*embed_dim=*/2, /*decoder_hidden=*/3,
                        /*beta=*/1.0, rng);
}

// Encoder becomes the identity on the mean block (content = x[0:2],
// bias = x[2:4]) with zero log-variances.
void make_identity_encoder(BagModel& m) {
  Layer& enc = m.vae.encoder.layers.front();
  std::fill(enc.W.data.begin(), enc.W.data.end(), 0.0);
  std::fill(enc.b.begin(), enc.b.end(), 0.0);
  for (std::size_t j = 0; j < 4; ++j) enc.W(j, j) = 1.0;
}

}  // namespace

TEST_CASE("pseudo_label argmax and tie rule") {
  BagModel m = small_model();
  make_identity_encoder(m);
  Layer& fc = m.head.f_c.layers.front();
  std::fill(fc.W.data.begin(), fc.W.data.end(), 0.0);
  fc.b = {2.0, -1.0};
  Matrix X(3, 4, 0.5);
  CHECK(pseudo_label(m, X) == std::vector<int>{0, 0, 0});

  fc.b = {0.7, 0.7};  // exact tie -> lower index
  CHECK(pseudo_label(m, X) == std::vector<int>{0, 0, 0});

  fc.b = {-1.0, 3.0};
  CHECK(pseudo_label(m, X) == std::vector<int>{1, 1, 1});
}

TEST_CASE("pseudo_label matches truth on separable content") {
  // Identity mixing, separated anchors, hand-built invariant head reading the
  // content coordinates directly.
  scm::ScmConfig cfg;
  cfg.n_envs = 1;
  cfg.env_probs = {1.0};
  cfg.env_embeddings = {{0.0, 0.0}};
  cfg.label_weights = {1.0, 0.0};
  cfg.label_offset = 0.0;
  cfg.sigma_y = 1.0;
  cfg.content_anchor0 = {-2.0, 0.0};
  cfg.content_anchor1 = {2.0, 0.0};
  cfg.sigma_c = 0.3;
  cfg.bias_table = {{std::vector<double>{0.5, 0.5}, std::vector<double>{-0.5, -0.5}}};
  cfg.sigma_b = 0.3;
  cfg.mixing = Matrix::identity(4);
  cfg.sigma_x = 0.0;
  cfg.target.embedding = {0.0, 0.0};
  cfg.target.bias_offsets = {std::vector<double>{0.5, 0.5}, std::vector<double>{-0.5, -0.5}};
  const scm::LabeledDataset ds = scm::generate(cfg, 2000, scm::EnvSet::source, 7);

  BagModel m = small_model();
  make_identity_encoder(m);
  Layer& fc = m.head.f_c.layers.front();
  fc.W.data = {-1.0, 0.0, 1.0, 0.0};  // class-1 logit grows with c[0]
  fc.b = {0.0, 0.0};

  const std::vector<int> pseudo = pseudo_label(m, ds.X);
  double agree = 0.0;
  for (std::size_t i = 0; i < pseudo.size(); ++i) agree += pseudo[i] == ds.y[i];
  CHECK(agree / static_cast<double>(pseudo.size()) >= 0.99);
}

TEST_CASE("tta_finetune with zero epochs is a no-op") {
  BagModel m = small_model(2);
  m.calib = calibrate::BinaryCalib{0.9, 0.9, {}};
  BagModel before = m;
  Rng rng(3);
  Matrix X = Matrix::gaussian(8, 4, rng, 1.0);
  AdaptConfig cfg;
  cfg.epochs = 0;
  const AdaptReport rep = tta_finetune(m, X, pseudo_label(m, X), cfg);
  CHECK(rep.ada_loss_trace.empty());
  CHECK(flatten(param_views(m)) == flatten(param_views(before)));
}

TEST_CASE("tta_finetune descent and freeze contract") {
  BagModel m = small_model(4);
  m.calib = calibrate::BinaryCalib{0.9, 0.9, {}};
  Rng rng(5);
  Matrix X = Matrix::gaussian(64, 4, rng, 1.0);
  const std::vector<int> pseudo = pseudo_label(m, X);

  const std::string hash_before = frozen_hash(m);
  const std::vector<double> frozen_before = flatten(frozen_param_views(m));
  const std::vector<double> bias_before = flatten(bias_head_param_views(m));

  AdaptConfig cfg;
  cfg.epochs = 50;
  cfg.step_size = 0.05;
  const AdaptReport rep = tta_finetune(m, X, pseudo, cfg);
  REQUIRE(rep.ada_loss_trace.size() == 50);
  for (std::size_t i = 1; i < rep.ada_loss_trace.size(); ++i)
    CHECK(rep.ada_loss_trace[i] <= rep.ada_loss_trace[i - 1] + 1e-12);

  CHECK(frozen_hash(m) == hash_before);
  CHECK(flatten(frozen_param_views(m)) == frozen_before);
  CHECK(flatten(bias_head_param_views(m)) != bias_before);
}

TEST_CASE("final_predict with perfect calibration equals the uncorrected path") {
  BagModel m = small_model(6);
  m.calib = calibrate::BinaryCalib{1.0, 1.0, {}};
  Rng rng(7);
  Matrix X = Matrix::gaussian(16, 4, rng, 1.0);
  const Matrix corrected = final_predict(m, CorrectionMode::binary_phi, X);
  const Matrix plain = final_predict(m, CorrectionMode::none, X);
  REQUIRE(corrected.same_shape(plain));
  for (std::size_t i = 0; i < corrected.size(); ++i)
    CHECK(std::fabs(corrected.data[i] - plain.data[i]) < 1e-10);
}

TEST_CASE("final_predict none mode equals stage-1 combined predictions") {
  const BagModel m = small_model(8);
  Rng rng(9);
  Matrix X = Matrix::gaussian(10, 4, rng, 1.0);
  const Matrix out = final_predict(m, CorrectionMode::none, X);
  const ForwardEval ev = forward_eval(m, X);
  CHECK(out.data == ev.combined.data);
}

TEST_CASE("final_predict falls back when the calibration margin is too small") {
  BagModel m = small_model(10);
  m.calib = calibrate::BinaryCalib{0.51, 0.51, {}};  // margin 0.02 < 0.05
  Rng rng(11);
  Matrix X = Matrix::gaussian(6, 4, rng, 1.0);
  const Matrix out = final_predict(m, CorrectionMode::binary_phi, X);
  const Matrix plain = final_predict(m, CorrectionMode::none, X);
  CHECK(out.data == plain.data);

  AdaptConfig cfg;
  cfg.epochs = 0;
  const AdaptReport rep = run_adaptation(m, X, cfg);
  CHECK(rep.fell_back);
  CHECK_FALSE(rep.correction_applied);
}

TEST_CASE("run_adaptation is deterministic and reports agreement") {
  BagModel a = small_model(12);
  a.calib = calibrate::BinaryCalib{0.85, 0.9, {}};
  BagModel b = a;
  Rng rng(13);
  Matrix X = Matrix::gaussian(32, 4, rng, 1.0);
  std::vector<int> truth(32, 0);
  for (std::size_t i = 0; i < truth.size(); ++i) truth[i] = static_cast<int>(i % 2);

  AdaptConfig cfg;
  cfg.epochs = 20;
  cfg.step_size = 0.1;
  const AdaptReport ra = run_adaptation(a, X, cfg, &truth);
  const AdaptReport rb = run_adaptation(b, X, cfg, &truth);
  CHECK(ra.ada_loss_trace == rb.ada_loss_trace);
  CHECK(ra.pseudo_agreement == rb.pseudo_agreement);
  CHECK(ra.calibration_margin == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(ra.correction_applied);
  CHECK_FALSE(ra.fell_back);
  CHECK(flatten(param_views(a)) == flatten(param_views(b)));
  CHECK(ra.pseudo_agreement >= 0.0);
  CHECK(ra.pseudo_agreement <= 1.0);
}

TEST_CASE("correction mode names round trip") {
  for (CorrectionMode mode : {CorrectionMode::binary_phi, CorrectionMode::multiclass_ls,
                              CorrectionMode::none})
    CHECK(correction_mode_from_name(correction_mode_name(mode)) == mode);
  CHECK_THROWS_AS(correction_mode_from_name("bogus"), std::invalid_argument);
}
