#include "alam/config.hpp"

#include <fstream>
#include <functional>
#include <map>

namespace alam {

using nlohmann::json;

namespace {

using Setter = std::function<void(const json&)>;

void apply_object(const json& j, const std::string& path,
                  const std::map<std::string, Setter>& fields) {
  require(j.is_object(), "config: expected object at " + (path.empty() ? "<root>" : path));
  for (const auto& [key, value] : j.items()) {
    auto it = fields.find(key);
    if (it == fields.end()) throw ValidationError("unknown config key: " + path + key);
    it->second(value);
  }
}

int as_int(const json& v, const std::string& key) {
  require(v.is_number_integer(), "config key " + key + ": expected integer");
  return v.get<int>();
}
double as_double(const json& v, const std::string& key) {
  require(v.is_number(), "config key " + key + ": expected number");
  return v.get<double>();
}
bool as_bool(const json& v, const std::string& key) {
  require(v.is_boolean(), "config key " + key + ": expected bool");
  return v.get<bool>();
}
std::string as_string(const json& v, const std::string& key) {
  require(v.is_string(), "config key " + key + ": expected string");
  return v.get<std::string>();
}

#define FIELD_INT(c, name) {#name, [&c, path](const json& v) { c.name = as_int(v, path + #name); }}
#define FIELD_DBL(c, name) {#name, [&c, path](const json& v) { c.name = as_double(v, path + #name); }}
#define FIELD_BOOL(c, name) {#name, [&c, path](const json& v) { c.name = as_bool(v, path + #name); }}
#define FIELD_STR(c, name) {#name, [&c, path](const json& v) { c.name = as_string(v, path + #name); }}

void apply_world(const json& j, const std::string& path, WorldConfig& c) {
  apply_object(j, path, {
    FIELD_INT(c, resolution), FIELD_INT(c, channels), FIELD_DBL(c, max_step),
    FIELD_DBL(c, eps_goal), FIELD_INT(c, traj_len), FIELD_INT(c, expert_max_len),
    FIELD_INT(c, n_distractors), FIELD_DBL(c, wrist_zoom), FIELD_BOOL(c, store_frames),
  });
}

void apply_data(const json& j, const std::string& path, DataConfig& c) {
  apply_object(j, path, {
    FIELD_INT(c, episodes), FIELD_STR(c, kind),
  });
}

void apply_encoder(const json& j, const std::string& path, EncoderConfig& c) {
  apply_object(j, path, {
    FIELD_INT(c, patch), FIELD_INT(c, hidden), FIELD_INT(c, layers), FIELD_INT(c, heads),
    FIELD_INT(c, queries), FIELD_INT(c, latent_dim), FIELD_INT(c, mlp_ratio),
    FIELD_STR(c, readout),
  });
}

void apply_quantizer(const json& j, const std::string& path, QuantizerConfig& c) {
  apply_object(j, path, {
    FIELD_INT(c, codebook_size), FIELD_DBL(c, ema_decay), FIELD_DBL(c, eps_count),
    FIELD_BOOL(c, straight_through), FIELD_BOOL(c, dead_restart), FIELD_DBL(c, dead_threshold),
  });
}

void apply_decoder(const json& j, const std::string& path, DecoderConfig& c) {
  apply_object(j, path, {
    FIELD_INT(c, latent_tokens), FIELD_INT(c, blocks),
  });
}

void apply_pretrain(const json& j, const std::string& path, PretrainConfig& c) {
  std::map<std::string, Setter> fields = {
    FIELD_STR(c, mode), FIELD_INT(c, steps), FIELD_INT(c, batch), FIELD_DBL(c, lr),
    FIELD_DBL(c, weight_decay), FIELD_DBL(c, beta1), FIELD_DBL(c, beta2),
    FIELD_DBL(c, grad_clip), FIELD_INT(c, gap_lo), FIELD_INT(c, gap_hi),
    FIELD_DBL(c, lambda_vq), FIELD_DBL(c, lambda_rec), FIELD_DBL(c, lambda_perc),
    FIELD_DBL(c, lambda_add), FIELD_DBL(c, lambda_rev), FIELD_BOOL(c, vq_include_reverse),
    FIELD_INT(c, log_every), FIELD_INT(c, checkpoint_every), FIELD_INT(c, keep_checkpoints),
  };
  fields["perc_seed"] = [&c, path](const json& v) {
    require(v.is_number_unsigned() || v.is_number_integer(), "config key " + path + "perc_seed: expected integer");
    c.perc_seed = v.get<uint64_t>();
  };
  apply_object(j, path, fields);
}

void apply_probe(const json& j, const std::string& path, ProbeConfig& c) {
  std::map<std::string, Setter> fields = {
    FIELD_INT(c, stride), FIELD_INT(c, max_multiple), FIELD_INT(c, n_anchors),
    FIELD_STR(c, norm), FIELD_INT(c, n_grids),
  };
  fields["supervised"] = [&c, path](const json& v) {
    require(v.is_array(), "config key " + path + "supervised: expected array");
    c.supervised.clear();
    for (const auto& e : v) c.supervised.push_back(as_int(e, path + "supervised[]"));
  };
  apply_object(j, path, fields);
}

void apply_policy(const json& j, const std::string& path, PolicyConfig& c) {
  apply_object(j, path, {
    FIELD_STR(c, mode), FIELD_INT(c, horizon), FIELD_INT(c, replan), FIELD_INT(c, k_steps),
    FIELD_INT(c, d_model), FIELD_INT(c, layers), FIELD_INT(c, heads), FIELD_INT(c, mlp_ratio),
    FIELD_INT(c, steps), FIELD_INT(c, batch), FIELD_DBL(c, lr), FIELD_DBL(c, weight_decay),
    FIELD_DBL(c, beta1), FIELD_DBL(c, beta2), FIELD_DBL(c, grad_clip), FIELD_DBL(c, lambda_th),
    FIELD_DBL(c, lambda_wr), FIELD_DBL(c, lambda_u), FIELD_INT(c, diffusion_timesteps),
    FIELD_INT(c, eval_episodes), FIELD_INT(c, eval_max_len), FIELD_INT(c, log_every),
    FIELD_INT(c, checkpoint_every), FIELD_INT(c, keep_checkpoints), FIELD_BOOL(c, proj_bias),
  });
}

#undef FIELD_INT
#undef FIELD_DBL
#undef FIELD_BOOL
#undef FIELD_STR

void apply_json_to_config(const json& j, RunConfig& c) {
  const std::string path;
  std::map<std::string, Setter> fields;
  fields["seed"] = [&c](const json& v) {
    require(v.is_number_unsigned() || v.is_number_integer(), "config key seed: expected integer");
    c.seed = v.get<uint64_t>();
  };
  fields["preset"] = [](const json&) { /* consumed before this pass */ };
  fields["threads"] = [&c](const json& v) { c.threads = as_int(v, "threads"); };
  fields["world"] = [&c](const json& v) { apply_world(v, "world.", c.world); };
  fields["data"] = [&c](const json& v) { apply_data(v, "data.", c.data); };
  fields["encoder"] = [&c](const json& v) { apply_encoder(v, "encoder.", c.encoder); };
  fields["quantizer"] = [&c](const json& v) { apply_quantizer(v, "quantizer.", c.quantizer); };
  fields["decoder"] = [&c](const json& v) { apply_decoder(v, "decoder.", c.decoder); };
  fields["pretrain"] = [&c](const json& v) { apply_pretrain(v, "pretrain.", c.pretrain); };
  fields["probe"] = [&c](const json& v) { apply_probe(v, "probe.", c.probe); };
  fields["policy"] = [&c](const json& v) { apply_policy(v, "policy.", c.policy); };
  apply_object(j, path, fields);
}

json parse_override_value(const std::string& raw) {
  // numbers/bools/arrays parse as JSON; anything else is a string
  json v = json::parse(raw, nullptr, false);
  if (v.is_discarded()) return json(raw);
  return v;
}

void set_dotted(json& root, const std::string& dotted, const json& value) {
  json* node = &root;
  size_t start = 0;
  while (true) {
    const size_t dot = dotted.find('.', start);
    const std::string key = dotted.substr(start, dot == std::string::npos ? dot : dot - start);
    require(!key.empty(), "override: empty key segment in '" + dotted + "'");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

}  // namespace

void apply_preset(RunConfig& c, const std::string& preset) {
  if (preset == "desk") return;  // desk values are the defaults
  if (preset == "paper") {
    // Appendix-A architecture. The paper trains at 200x200 with patch 14;
    // 200 is not patch-divisible, so the preset uses 196 = 14*14.
    c.world.resolution = 196;
    c.encoder.patch = 14;
    c.encoder.hidden = 768;
    c.encoder.layers = 12;
    c.encoder.heads = 12;
    c.encoder.queries = 256;
    c.encoder.latent_dim = 128;
    c.quantizer.codebook_size = 7;
    c.decoder.blocks = 12;
    c.pretrain.gap_lo = 1;
    c.pretrain.gap_hi = 16;
    c.policy.horizon = 16;
    return;
  }
  throw ValidationError("unknown preset: " + preset + " (expected desk|paper)");
}

RunConfig config_from_json(const json& j) {
  RunConfig c;
  if (j.contains("preset")) {
    require(j["preset"].is_string(), "config key preset: expected string");
    c.preset = j["preset"].get<std::string>();
    apply_preset(c, c.preset);
  }
  apply_json_to_config(j, c);
  return c;
}

RunConfig parse_config(const std::string& path_or_empty, const std::vector<std::string>& overrides) {
  json j = json::object();
  if (!path_or_empty.empty()) {
    std::ifstream f(path_or_empty);
    require(f.good(), "config file not found: " + path_or_empty);
    try {
      f >> j;
    } catch (const json::parse_error& e) {
      throw ValidationError("config parse error in " + path_or_empty + ": " + e.what());
    }
  }
  for (const auto& ov : overrides) {
    const size_t eq = ov.find('=');
    require(eq != std::string::npos, "override must be key=value, got '" + ov + "'");
    set_dotted(j, ov.substr(0, eq), parse_override_value(ov.substr(eq + 1)));
  }
  RunConfig c = config_from_json(j);
  c.validate();
  return c;
}

void RunConfig::validate() const {
  require(preset == "desk" || preset == "paper", "preset: expected desk|paper");
  require(world.resolution > 0, "world.resolution must be positive");
  require(world.channels == 3, "world.channels: only 3 supported");
  require(world.max_step > 0, "world.max_step must be positive");
  require(world.traj_len >= 2, "world.traj_len must be >= 2");
  require(encoder.patch > 0 && world.resolution % encoder.patch == 0,
          "encoder.patch must divide world.resolution");
  require(encoder.hidden % encoder.heads == 0, "encoder.heads must divide encoder.hidden");
  require(encoder.queries >= 1, "encoder.queries must be >= 1");
  require(encoder.latent_dim >= 1, "encoder.latent_dim must be >= 1");
  require(encoder.readout == "mean" || encoder.readout == "concat",
          "encoder.readout: expected mean|concat");
  require(quantizer.codebook_size >= 1, "quantizer.codebook_size must be >= 1");
  require(quantizer.ema_decay > 0.0 && quantizer.ema_decay < 1.0,
          "quantizer.ema_decay must be in (0,1)");
  require(decoder.latent_tokens >= 1, "decoder.latent_tokens must be >= 1");
  require(decoder.blocks >= 1, "decoder.blocks must be >= 1");
  const bool mode_ok = pretrain.mode == "alam" || pretrain.mode == "lam" ||
                       pretrain.mode == "alam_no_add" || pretrain.mode == "alam_no_rev" ||
                       pretrain.mode == "alam_no_both";
  require(mode_ok, "pretrain.mode: expected alam|lam|alam_no_add|alam_no_rev|alam_no_both");
  require(pretrain.gap_lo >= 1 && pretrain.gap_hi >= pretrain.gap_lo,
          "pretrain.gap_lo/gap_hi: need 1 <= gap_lo <= gap_hi");
  require(world.traj_len - 1 >= 2 * pretrain.gap_hi,
          "world.traj_len too short for pretrain.gap_hi (need 2*gap_hi+1 frames)");
  require(probe.stride >= 1 && probe.max_multiple >= 1, "probe.stride/max_multiple must be >= 1");
  require(probe.norm == "l2" || probe.norm == "l1", "probe.norm: expected l2|l1");
  for (int s : probe.supervised)
    require(s >= 1 && s <= probe.max_multiple, "probe.supervised entries must lie in the grid");
  const bool pmode_ok = policy.mode == "joint" || policy.mode == "action_only" ||
                        policy.mode == "two_stage" || policy.mode == "diffusion";
  require(pmode_ok, "policy.mode: expected joint|action_only|two_stage|diffusion");
  require(policy.horizon >= 1, "policy.horizon must be >= 1");
  require(policy.replan >= 1 && policy.replan <= policy.horizon,
          "policy.replan must be in [1, horizon]");
  require(policy.k_steps >= 1, "policy.k_steps must be >= 1");
  require(policy.d_model % policy.heads == 0, "policy.heads must divide policy.d_model");
  require(data.kind == "video" || data.kind == "demo", "data.kind: expected video|demo");
}

json world_to_json(const WorldConfig& c) {
  return json{
      {"resolution", c.resolution}, {"channels", c.channels}, {"max_step", c.max_step},
      {"eps_goal", c.eps_goal}, {"traj_len", c.traj_len}, {"expert_max_len", c.expert_max_len},
      {"n_distractors", c.n_distractors}, {"wrist_zoom", c.wrist_zoom},
      {"store_frames", c.store_frames}};
}

WorldConfig world_from_json(const json& j, const std::string& path) {
  WorldConfig c;
  apply_world(j, path, c);
  return c;
}

json config_to_json(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["preset"] = c.preset;
  j["threads"] = c.threads;
  j["world"] = world_to_json(c.world);
  j["data"] = {{"episodes", c.data.episodes}, {"kind", c.data.kind}};
  j["encoder"] = {{"patch", c.encoder.patch}, {"hidden", c.encoder.hidden},
                  {"layers", c.encoder.layers}, {"heads", c.encoder.heads},
                  {"queries", c.encoder.queries}, {"latent_dim", c.encoder.latent_dim},
                  {"mlp_ratio", c.encoder.mlp_ratio}, {"readout", c.encoder.readout}};
  j["quantizer"] = {{"codebook_size", c.quantizer.codebook_size},
                    {"ema_decay", c.quantizer.ema_decay}, {"eps_count", c.quantizer.eps_count},
                    {"straight_through", c.quantizer.straight_through},
                    {"dead_restart", c.quantizer.dead_restart},
                    {"dead_threshold", c.quantizer.dead_threshold}};
  j["decoder"] = {{"latent_tokens", c.decoder.latent_tokens}, {"blocks", c.decoder.blocks}};
  j["pretrain"] = {{"mode", c.pretrain.mode}, {"steps", c.pretrain.steps},
                   {"batch", c.pretrain.batch}, {"lr", c.pretrain.lr},
                   {"weight_decay", c.pretrain.weight_decay}, {"beta1", c.pretrain.beta1},
                   {"beta2", c.pretrain.beta2}, {"grad_clip", c.pretrain.grad_clip},
                   {"gap_lo", c.pretrain.gap_lo}, {"gap_hi", c.pretrain.gap_hi},
                   {"lambda_vq", c.pretrain.lambda_vq}, {"lambda_rec", c.pretrain.lambda_rec},
                   {"lambda_perc", c.pretrain.lambda_perc}, {"lambda_add", c.pretrain.lambda_add},
                   {"lambda_rev", c.pretrain.lambda_rev},
                   {"vq_include_reverse", c.pretrain.vq_include_reverse},
                   {"log_every", c.pretrain.log_every},
                   {"checkpoint_every", c.pretrain.checkpoint_every},
                   {"keep_checkpoints", c.pretrain.keep_checkpoints},
                   {"perc_seed", c.pretrain.perc_seed}};
  j["probe"] = {{"stride", c.probe.stride}, {"max_multiple", c.probe.max_multiple},
                {"supervised", c.probe.supervised}, {"n_anchors", c.probe.n_anchors},
                {"norm", c.probe.norm}, {"n_grids", c.probe.n_grids}};
  j["policy"] = {{"mode", c.policy.mode}, {"horizon", c.policy.horizon},
                 {"replan", c.policy.replan}, {"k_steps", c.policy.k_steps},
                 {"d_model", c.policy.d_model}, {"layers", c.policy.layers},
                 {"heads", c.policy.heads}, {"mlp_ratio", c.policy.mlp_ratio},
                 {"steps", c.policy.steps}, {"batch", c.policy.batch}, {"lr", c.policy.lr},
                 {"weight_decay", c.policy.weight_decay}, {"beta1", c.policy.beta1},
                 {"beta2", c.policy.beta2}, {"grad_clip", c.policy.grad_clip},
                 {"lambda_th", c.policy.lambda_th}, {"lambda_wr", c.policy.lambda_wr},
                 {"lambda_u", c.policy.lambda_u},
                 {"diffusion_timesteps", c.policy.diffusion_timesteps},
                 {"eval_episodes", c.policy.eval_episodes},
                 {"eval_max_len", c.policy.eval_max_len}, {"log_every", c.policy.log_every},
                 {"checkpoint_every", c.policy.checkpoint_every},
                 {"keep_checkpoints", c.policy.keep_checkpoints},
                 {"proj_bias", c.policy.proj_bias}};
  return j;
}

}  // namespace alam

