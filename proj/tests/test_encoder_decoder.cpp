#include <doctest.h>

#include <cmath>

#include "alam/decoder.hpp"
#include "alam/encoder.hpp"
#include "alam/synthworld.hpp"
#include "test_util.hpp"

using namespace alam;

namespace {

// 16x16 toy configuration used for the float64 gradient checks.
RunConfig toy_config() {
  RunConfig c;
  c.world.resolution = 16;
  c.encoder.patch = 8;
  c.encoder.hidden = 16;
  c.encoder.layers = 1;
  c.encoder.heads = 2;
  c.encoder.queries = 2;
  c.encoder.latent_dim = 4;
  c.encoder.mlp_ratio = 2;
  c.decoder.latent_tokens = 2;
  c.decoder.blocks = 1;
  return c;
}

nn::ParamStore toy_params(const RunConfig& c, uint64_t seed) {
  nn::ParamStore p;
  Rng rng(seed);
  encoder::init_params(p, c.encoder, c.world.resolution, c.world.channels, rng);
  decoder::init_params(p, c.decoder, c.encoder, c.world.resolution, c.world.channels, rng);
  return p;
}

Frame toy_frame(uint64_t seed, const RunConfig& c) {
  Rng rng(seed);
  const WorldState s = sample_initial_state(rng, c.world);
  return render_view(s, View::global, c.world.resolution, c.world);
}

}  // namespace

TEST_CASE("patch extraction has the contracted count and order") {
  RunConfig c;
  c.world.resolution = 64;
  Rng rng(41);
  const Frame f = render_view(sample_initial_state(rng, c.world), View::global, 64, c.world);
  const Tensor m = encoder::patch_matrix(f, 8);
  CHECK(m.rows() == 64);
  CHECK(m.cols() == 8 * 8 * 3);
  // row 0 is the top-left patch, row-major within the patch
  CHECK(m.at(0, 0) == doctest::Approx(static_cast<double>(f.at(0, 0, 0))));
  CHECK(m.at(0, 3) == doctest::Approx(static_cast<double>(f.at(0, 1, 0))));
  CHECK(m.at(1, 0) == doctest::Approx(static_cast<double>(f.at(0, 8, 0))));
  CHECK(m.at(8, 0) == doctest::Approx(static_cast<double>(f.at(8, 0, 0))));

  Frame bad = f;
  bad.h = 60;
  CHECK_THROWS_AS(encoder::patch_matrix(bad, 8), ValidationError);
}

TEST_CASE("patchify is deterministic; swapping frames swaps slots, not contents") {
  RunConfig c = toy_config();
  auto params = toy_params(c, 42);
  const Frame fi = toy_frame(1, c), fj = toy_frame(2, c);
  const int n = encoder::tokens_per_frame(c.encoder, c.world.resolution);

  ag::Tape t;
  nn::Bound b = nn::bind(t, params, false);
  const int ij = encoder::patchify(t, b, c.encoder, fi, fj);
  const int ij2 = encoder::patchify(t, b, c.encoder, fi, fj);
  const int ji = encoder::patchify(t, b, c.encoder, fj, fi);
  CHECK(t.val(ij).rows() == 2 * n);
  CHECK(t.val(ij).data == t.val(ij2).data);

  // content of frame i, with the slot tag subtracted, is identical whether
  // i sits in slot 0 or slot 1
  const Tensor& pos = params.get("enc.pos");
  const int d = c.encoder.hidden;
  for (int r = 0; r < n; ++r)
    for (int k = 0; k < d; ++k) {
      const double content_slot0 = t.val(ij).at(r, k) - pos.at(r, k);
      const double content_slot1 = t.val(ji).at(n + r, k) - pos.at(n + r, k);
      CHECK(content_slot0 == doctest::Approx(content_slot1).epsilon(1e-12));
    }
}

TEST_CASE("encode_transition has the contracted shape and is deterministic") {
  RunConfig c = toy_config();
  auto params = toy_params(c, 43);
  const Frame fi = toy_frame(3, c), fj = toy_frame(4, c);

  const Tensor z1 = encoder::encode_value(params, c.encoder, fi, fj);
  const Tensor z2 = encoder::encode_value(params, c.encoder, fi, fj);
  CHECK(z1.rows() == 1);
  CHECK(z1.cols() == c.encoder.latent_dim);
  CHECK(z1.data == z2.data);

  // concat readout changes the head but keeps the contract
  RunConfig cc = c;
  cc.encoder.readout = "concat";
  auto params_cc = toy_params(cc, 43);
  const Tensor z3 = encoder::encode_value(params_cc, cc.encoder, fi, fj);
  CHECK(z3.cols() == cc.encoder.latent_dim);
}

TEST_CASE("encode_batch equals per-pair encoding and rejects ragged input") {
  RunConfig c = toy_config();
  auto params = toy_params(c, 44);
  std::vector<std::pair<Frame, Frame>> pairs;
  for (int i = 0; i < 3; ++i) pairs.emplace_back(toy_frame(10 + static_cast<uint64_t>(i), c), toy_frame(20 + static_cast<uint64_t>(i), c));
  pairs.push_back(pairs[0]);  // duplicated pair

  const auto batch = encoder::encode_batch(params, c.encoder, pairs);
  REQUIRE(batch.size() == 4);
  for (size_t i = 0; i < pairs.size(); ++i) {
    const Tensor single = encoder::encode_value(params, c.encoder, pairs[i].first, pairs[i].second);
    for (int j = 0; j < single.cols(); ++j)
      CHECK(std::fabs(batch[i].data[static_cast<size_t>(j)] - single.data[static_cast<size_t>(j)]) <= 1e-6);
  }
  CHECK(batch[3].data == batch[0].data);  // duplicates give identical rows

  auto ragged = pairs;
  RunConfig c2 = c;
  c2.world.resolution = 32;
  ragged.emplace_back(toy_frame(5, c2), toy_frame(6, c2));
  CHECK_THROWS_AS(encoder::encode_batch(params, c.encoder, ragged), ValidationError);
}

TEST_CASE("encoder latent-norm gradients match finite differences per group") {
  RunConfig c = toy_config();
  auto params = toy_params(c, 45);
  const Frame fi = toy_frame(7, c), fj = toy_frame(8, c);

  auto loss = [&](ag::Tape& t, const nn::Bound& b) {
    const int z = encoder::encode_transition(t, b, c.encoder, fi, fj);
    return ag::sum_squares(t, z);
  };
  for (const auto& g : testutil::per_group_gradcheck(params, loss, 46)) {
    INFO("group ", g.name);
    CHECK(g.res.ok(1e-3, 1e-5));
  }
}

TEST_CASE("decode matches shape, range, and determinism contracts") {
  RunConfig c = toy_config();
  auto params = toy_params(c, 47);
  const Frame src = toy_frame(9, c);
  Rng rng(48);
  const Tensor z = testutil::random_tensor({1, c.encoder.latent_dim}, rng, 50.0);  // extreme

  const Frame out1 = decoder::decode_value(params, c.decoder, c.encoder, z, src);
  const Frame out2 = decoder::decode_value(params, c.decoder, c.encoder, z, src);
  CHECK(out1.h == src.h);
  CHECK(out1.w == src.w);
  CHECK(out1.c == src.c);
  CHECK(out1.px == out2.px);
  for (float v : out1.px) {
    CHECK(v > 0.0f);
    CHECK(v < 1.0f);
  }
}

TEST_CASE("decode_composed is bit-identical to decode") {
  RunConfig c = toy_config();
  auto params = toy_params(c, 49);
  const Frame src = toy_frame(11, c);
  Rng rng(50);
  const Tensor z = testutil::random_tensor({1, c.encoder.latent_dim}, rng);

  ag::Tape t;
  nn::Bound b = nn::bind(t, params, false);
  const int tok = encoder::embed_frame_tokens(t, b, c.encoder, src, 0);
  const int zi = t.constant(z);
  const int d1 = decoder::decode(t, b, c.decoder, c.encoder, zi, tok, src.h, src.c);
  const int tok2 = encoder::embed_frame_tokens(t, b, c.encoder, src, 0);
  const int d2 = decoder::decode_composed(t, b, c.decoder, c.encoder, zi, tok2, src.h, src.c);
  CHECK(t.val(d1).data == t.val(d2).data);
}

TEST_CASE("decoder output depends on the source frame at init") {
  RunConfig c = toy_config();
  auto params = toy_params(c, 51);
  Rng rng(52);
  const Tensor z = testutil::random_tensor({1, c.encoder.latent_dim}, rng);
  const Frame s1 = toy_frame(13, c), s2 = toy_frame(14, c);
  const Frame o1 = decoder::decode_value(params, c.decoder, c.encoder, z, s1);
  const Frame o2 = decoder::decode_value(params, c.decoder, c.encoder, z, s2);
  CHECK(frame_mse(o1, o2) > 0.0);
}

TEST_CASE("decoder pixel-MSE gradients match finite differences per group") {
  RunConfig c = toy_config();
  auto params = toy_params(c, 53);
  const Frame src = toy_frame(15, c), tgt = toy_frame(16, c);
  Rng rng(54);
  const Tensor z = testutil::random_tensor({1, c.encoder.latent_dim}, rng);

  auto loss = [&](ag::Tape& t, const nn::Bound& b) {
    const int tok = encoder::embed_frame_tokens(t, b, c.encoder, src, 0);
    const int img = decoder::decode(t, b, c.decoder, c.encoder, t.constant(z), tok, src.h, src.c);
    return ag::mse(t, img, t.constant(tgt.to_tensor()));
  };
  for (const auto& g : testutil::per_group_gradcheck(params, loss, 55)) {
    if (g.name.rfind("enc.", 0) == 0 && g.name != "enc.patch_embed.w" &&
        g.name != "enc.patch_embed.b" && g.name != "enc.pos")
      continue;  // other encoder groups do not feed this path
    INFO("group ", g.name);
    CHECK(g.res.ok(1e-3, 1e-5));
  }
}
