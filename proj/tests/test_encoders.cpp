#include <catch_amalgamated.hpp>

#include <cmath>
#include <numeric>
#include <numbers>

#include "aimm/enc/encoders.hpp"
#include "aimm/io/bundle.hpp"
#include "aimm/nn/adam.hpp"
#include "aimm/numerics/grad_check.hpp"
#include "aimm/scene/dataset.hpp"

using namespace aimm;

namespace {

enc::EncoderDims small_dims() {
  enc::EncoderDims d;
  d.env_in = 6;
  d.csi_in = 8;
  d.hidden = 5;
  d.d_enc = 4;
  return d;
}

Tensor<double> random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  Rng rng(seed);
  return nn::normal_tensor<double>({r, c}, 1.0, rng);
}

}  // namespace

TEST_CASE("encoder outputs", "[enc]") {
  const auto e = enc::EncoderPair<double>::init(small_dims(), 3);
  const auto x = ad::Var<double>::constant(random_matrix(7, 6, 1));
  const auto codes = e.encode_environment(x);
  REQUIRE(codes.rows() == 7);
  REQUIRE(codes.cols() == 4);
  for (std::size_t i = 0; i < 7; ++i) {
    double n = 0;
    for (std::size_t j = 0; j < 4; ++j) n += codes.value().at(i, j) * codes.value().at(i, j);
    REQUIRE(std::abs(std::sqrt(n) - 1.0) < 1e-6);
  }
  REQUIRE(e.encode_environment(x).value() == codes.value());
  REQUIRE_THROWS_AS(e.encode_channel(x), DimensionError);

  const auto zero = e.encode_channel(ad::Var<double>::constant(Tensor<double>({2, 8})));
  for (double v : zero.value().values()) REQUIRE(std::isfinite(v));
  REQUIRE(zero.value().at(0, 0) == zero.value().at(1, 0));

  // same seed, same weights; another seed differs
  const auto again = enc::EncoderPair<double>::init(small_dims(), 3);
  REQUIRE(nn::param_hash(again.all_params()) == nn::param_hash(e.all_params()));
  REQUIRE(nn::param_hash(enc::EncoderPair<double>::init(small_dims(), 4).all_params()) !=
          nn::param_hash(e.all_params()));
}

TEST_CASE("info_nce", "[enc][contrastive]") {
  const auto s = ad::Var<double>::leaf(Tensor<double>({1}, {std::log(1.0 / 0.07)}), true);
  SECTION("single pair batch is rejected") {
    const auto one = ad::Var<double>::constant(Tensor<double>({1, 2}, {1, 0}));
    REQUIRE_THROWS_AS(enc::info_nce(one, one, s), PreconditionError);
  }
  SECTION("perfect alignment limit") {
    // two antipodal codes: diagonal cosine 1, off-diagonal −1
    const auto codes = ad::Var<double>::constant(Tensor<double>::matrix(2, 2, {{1, 0}, {-1, 0}}));
    REQUIRE(enc::info_nce(codes, codes, s).item() < 1e-6);
  }
  SECTION("joint permutation leaves the loss unchanged") {
    Rng rng(5);
    const auto a = ad::l2_normalize_rows(ad::Var<double>::constant(random_matrix(9, 4, 7)));
    const auto b = ad::l2_normalize_rows(ad::Var<double>::constant(random_matrix(9, 4, 8)));
    const auto perm = nn::shuffled_indices(9, rng);
    const auto pa = ad::Var<double>::constant(nn::take_rows(a.value(), perm));
    const auto pb = ad::Var<double>::constant(nn::take_rows(b.value(), perm));
    REQUIRE(std::abs(enc::info_nce(a, b, s).item() - enc::info_nce(pa, pb, s).item()) < 1e-10);
  }
  SECTION("gradient matches finite differences") {
    const auto a = ad::Var<double>::leaf(random_matrix(5, 3, 11), true);
    const auto b = ad::Var<double>::leaf(random_matrix(5, 3, 12), true);
    const auto scale = ad::Var<double>::leaf(Tensor<double>({1}, {1.3}), true);
    const double err = ad::grad_check_leaves(
        [&] {
          return enc::info_nce(ad::l2_normalize_rows(a), ad::l2_normalize_rows(b), scale);
        },
        {a, b, scale});
    REQUIRE(err < 1e-6);
  }
}

TEST_CASE("adapter", "[enc][adapter]") {
  auto adapter = nn::Linear<double>::zeros(4, 6);
  for (std::size_t i = 0; i < 6; ++i) adapter.bias.mutable_value()[i] = double(i) - 2.5;
  const auto out = adapter.forward(ad::Var<double>::constant(random_matrix(3, 4, 2)));
  REQUIRE(out.cols() == 6);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 6; ++c) REQUIRE(out.value().at(r, c) == double(c) - 2.5);
  REQUIRE_THROWS_AS(adapter.forward(ad::Var<double>::constant(random_matrix(3, 5, 2))),
                    DimensionError);

  Rng rng(9);
  const auto lin = nn::Linear<double>::init(4, 6, rng);
  const auto x = ad::Var<double>::constant(random_matrix(3, 4, 4));
  const auto target = random_matrix(3, 6, 5);
  const double err = ad::grad_check_leaves([&] { return ad::mse(lin.forward(x), target); },
                                           {lin.weight, lin.bias});
  REQUIRE(err < 1e-5);
}

TEST_CASE("adam", "[nn][adam]") {
  const auto w = ad::Var<float>::leaf(Tensor<float>({2}, {1.0f, -2.0f}), true);
  nn::Adam opt({{"w", w}}, {.lr = 0.1});
  // first step moves each coordinate by lr·sign(g)
  ad::backward(ad::sum(ad::mul(w, w)));
  opt.step();
  REQUIRE(w.value()[0] == Catch::Approx(0.9).epsilon(1e-6));
  REQUIRE(w.value()[1] == Catch::Approx(-1.9).epsilon(1e-6));
  for (int i = 0; i < 300; ++i) {
    opt.zero_grad();
    ad::backward(ad::sum(ad::mul(w, w)));
    opt.step();
  }
  REQUIRE(std::abs(w.value()[0]) < 0.05);
  REQUIRE(std::abs(w.value()[1]) < 0.05);

  // no gradient, no movement
  const auto idle = ad::Var<float>::leaf(Tensor<float>({1}, {3.0f}), true);
  nn::Adam opt2({{"idle", idle}}, {});
  opt2.step();
  REQUIRE(idle.value()[0] == 3.0f);
  REQUIRE(opt2.step_counts()[0] == 0);
}

TEST_CASE("bundle files", "[io][bundle]") {
  const auto e = enc::EncoderPair<float>::init(small_dims(), 1);
  const auto bytes = io::encode_bundle("AIMW", enc::encoders_bundle(e));
  const auto back = enc::encoders_from_bundle(io::decode_bundle(bytes, "AIMW"));
  REQUIRE(io::encode_bundle("AIMW", enc::encoders_bundle(back)) == bytes);
  REQUIRE(back.dims.d_enc == 4);

  try {
    io::decode_bundle(bytes, "AIMB");
    FAIL("expected a format error");
  } catch (const FormatError& err) {
    REQUIRE(err.offset() == 0);
  }
  auto cut = bytes;
  cut.resize(cut.size() - 1);
  REQUIRE_THROWS_AS(io::decode_bundle(cut, "AIMW"), FormatError);

  // loading into a different topology is a checkpoint error
  auto other = small_dims();
  other.hidden = 6;
  const auto wrong = enc::EncoderPair<float>::init(other, 1);
  REQUIRE_THROWS_AS(io::load_params(io::decode_bundle(bytes, "AIMW"), wrong.all_params()),
                    CheckpointError);
}

TEST_CASE("channel inputs", "[enc][csi]") {
  const std::size_t n_t = 4, n_c = 8, p = 3, q = 5;
  scene::SampleRecord rec;
  rec.precoder.assign(2 * n_t, 0.0f);
  rec.csi.resize(2 * n_t * n_c);
  auto fill = [&](double phase) {
    for (std::size_t r = 0; r < n_t; ++r)
      for (std::size_t k = 0; k < n_c; ++k) {
        const double a = 2.0 * std::numbers::pi * (double(r * p) / n_t + double(k * q) / n_c) + phase;
        rec.csi[2 * (r * n_c + k)] = static_cast<float>(0.5 * std::cos(a));
        rec.csi[2 * (r * n_c + k) + 1] = static_cast<float>(0.5 * std::sin(a));
      }
  };
  fill(0.0);
  const auto x = enc::channel_inputs({rec}, 2.0);
  REQUIRE(x.cols() == n_t * n_c);
  // an on-grid plane wave lands in a single angle-delay bin
  for (std::size_t j = 0; j < n_t * n_c; ++j) {
    const double expect = j == p * n_c + q ? 0.25 * std::sqrt(double(n_t * n_c)) : 0.0;
    CHECK(std::abs(x[j] - expect) < 1e-5);
  }
  fill(1.234);
  const auto y = enc::channel_inputs({rec}, 2.0);
  for (std::size_t j = 0; j < x.size(); ++j) CHECK(std::abs(x[j] - y[j]) < 1e-5);

  rec.precoder.clear();
  CHECK_THROWS_AS(enc::channel_inputs({rec}, 1.0), DimensionError);
}

TEST_CASE("short alignment run learns matched pairs", "[enc][align]") {
  scene::ChannelConfig cfg;
  cfg.n_t = 4;
  cfg.n_c = 4;
  std::vector<scene::AreaSpec> train_areas, test_areas;
  for (std::uint64_t a = 0; a < 4; ++a) {
    train_areas.push_back({a, 1000, 64});
    test_areas.push_back({a, 2000, 16});
  }
  const auto train = scene::build_dataset(2, train_areas, cfg, "align");
  const auto test = scene::build_dataset(2, test_areas, cfg, "align-test");
  enc::EncoderDims dims;
  dims.csi_in = 4 * 4;
  dims.hidden = 32;
  dims.d_enc = 16;
  enc::AlignReport report;
  const auto e = enc::train_alignment(enc::environment_inputs(train.records),
                                      enc::channel_inputs(train.records, train.csi_rms()),
                                      train.csi_rms(), dims, {.epochs = 15, .batch = 32, .seed = 1},
                                      &report);
  REQUIRE(report.epoch_loss.size() == 15);
  REQUIRE(report.epoch_loss.back() < report.epoch_loss.front());
  const auto st = enc::evaluate_retrieval(e, enc::environment_inputs(test.records),
                                          enc::channel_inputs(test.records, train.csi_rms()), 32);
  REQUIRE(st.batches == 2);
  REQUIRE(st.matched_cosine > st.mismatched_cosine);
  REQUIRE(st.top1 > 1.0 / 32.0);
}
