// Command-line front end: gen-data, pretrain, probe, train-policy,
// eval-policy, intervene, plot, print-config.
// Exit codes: 0 ok, 2 validation error, 3 numerical failure.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>

#include "alam/checkpoint.hpp"
#include "alam/config.hpp"
#include "alam/dataset.hpp"
#include "alam/kernels.hpp"
#include "alam/plots.hpp"
#include "alam/policy.hpp"
#include "alam/pretrain.hpp"
#include "alam/probes.hpp"

namespace fs = std::filesystem;
using namespace alam;
using nlohmann::json;

namespace {

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> sets;
  int threads = -1;  // -1 = take from config
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config_path, "JSON config file");
  cmd->add_option("--set", o.sets, "dotted config override key=value (repeatable)");
  cmd->add_option("--threads", o.threads, "OpenMP thread count (1 = serial kernels)");
}

RunConfig load_config(const CommonOpts& o) {
  RunConfig cfg = parse_config(o.config_path, o.sets);
  if (o.threads >= 0) cfg.threads = o.threads;
  if (cfg.threads > 0) {
    kernels::set_threads(cfg.threads);
    kernels::set_parallel(cfg.threads != 1);
  }
  return cfg;
}

std::string resolve_out(const std::string& out) {
  require(!out.empty(), "--out is required");
  const char* root = std::getenv("ALAM_OUT_ROOT");
  fs::path p(out);
  if (root && *root && p.is_relative()) p = fs::path(root) / p;
  return p.string();
}

void ensure_out(const std::string& out, bool force) {
  if (fs::exists(out) && !fs::is_empty(out)) {
    require(force, "output directory exists and is not empty: " + out + " (use --force)");
    fs::remove_all(out);
  }
  fs::create_directories(out);
}

TransitionFn encoder_transition(const PretrainModel& model) {
  const nn::ParamStore* params = &model.params;
  const EncoderConfig cfg = model.cfg.encoder;
  return [params, cfg](const Episode& ep, View v, int i, int j) {
    return encoder::encode_value(*params, cfg, ep.frame(v, i), ep.frame(v, j));
  };
}

DecodeFn decoder_fn(const PretrainModel& model) {
  const PretrainModel* m = &model;
  return [m](const Tensor& z, const Frame& src) {
    return decoder::decode_value(m->params, m->cfg.decoder, m->cfg.encoder, z, src);
  };
}

int run_cli(int argc, char** argv) {
  CLI::App app{"ALAM desk-scale artifact: algebraically consistent latent actions"};
  app.require_subcommand(1);

  // ---- gen-data ----
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  CommonOpts gen_o;
  add_common(gen, gen_o);
  std::string gen_out, gen_kind;
  int gen_episodes = -1, gen_png = 0;
  bool gen_force = false;
  gen->add_option("--out", gen_out)->required();
  gen->add_option("--kind", gen_kind, "video|demo (default from config)");
  gen->add_option("--episodes", gen_episodes);
  gen->add_option("--png", gen_png, "also export PNG frames for the first N episodes");
  gen->add_flag("--force", gen_force);
  gen->callback([&] {
    RunConfig cfg = load_config(gen_o);
    const std::string kind = gen_kind.empty() ? cfg.data.kind : gen_kind;
    const int episodes = gen_episodes > 0 ? gen_episodes : cfg.data.episodes;
    const int min_frames = kind == "demo" ? cfg.policy.horizon + 1 : 0;
    const std::string out = resolve_out(gen_out);
    ensure_out(out, gen_force);
    Dataset::generate(cfg.world, kind, episodes, cfg.seed, out, min_frames);
    Dataset ds(out);
    if (gen_png > 0) ds.export_pngs((fs::path(out) / "png").string(), gen_png);
    std::cout << "wrote " << episodes << " " << kind << " episodes to " << out << "\n";
  });

  // ---- pretrain ----
  auto* pre = app.add_subcommand("pretrain", "train the transition encoder/decoder");
  CommonOpts pre_o;
  add_common(pre, pre_o);
  std::string pre_data, pre_out, pre_mode, pre_resume;
  bool pre_force = false;
  pre->add_option("--data", pre_data)->required();
  pre->add_option("--out", pre_out)->required();
  pre->add_option("--mode", pre_mode, "alam|lam|alam_no_add|alam_no_rev|alam_no_both");
  pre->add_option("--resume", pre_resume, "checkpoint directory to resume from");
  pre->add_flag("--force", pre_force);
  pre->callback([&] {
    RunConfig cfg = load_config(pre_o);
    if (!pre_mode.empty()) cfg.pretrain.mode = pre_mode;
    Dataset data(pre_data);
    cfg.world = data.world();
    cfg.validate();
    const std::string out = resolve_out(pre_out);
    if (pre_resume.empty()) ensure_out(out, pre_force);
    PretrainModel model = pre_resume.empty() ? PretrainModel(cfg)
                                             : load_pretrain_model(pre_resume);
    const TrainResult r = train_pretrain(model, data, out);
    std::cout << "pretrain [" << cfg.pretrain.mode << "] done: steps=" << r.steps_done
              << " loss " << r.first.total << " -> " << r.last.total << "\n"
              << "checkpoint: " << r.final_checkpoint << "\n";
  });

  // ---- probe ----
  auto* prb = app.add_subcommand("probe", "run the algebraic/reconstruction probe suite");
  CommonOpts prb_o;
  add_common(prb, prb_o);
  std::string prb_ckpt, prb_data, prb_out, prb_split = "test";
  bool prb_force = false, prb_oracle = false;
  prb->add_option("--checkpoint", prb_ckpt, "pretrain checkpoint (omit with --oracle)");
  prb->add_option("--data", prb_data)->required();
  prb->add_option("--out", prb_out)->required();
  prb->add_option("--split", prb_split, "test|train");
  prb->add_flag("--oracle", prb_oracle, "probe the ground-truth displacement oracle");
  prb->add_flag("--force", prb_force);
  prb->callback([&] {
    RunConfig cfg = load_config(prb_o);
    Dataset data(prb_data);
    require(prb_split == "test" || prb_split == "train", "--split must be test|train");
    const auto ids = prb_split == "test" ? data.test_ids() : data.train_ids();
    const std::string out = resolve_out(prb_out);
    ensure_out(out, prb_force);

    ProbeReport report;
    if (prb_oracle) {
      report = probe_report(oracle_transition(), nullptr, nullptr, data, ids, cfg.probe,
                            cfg.seed, "oracle");
    } else {
      require(!prb_ckpt.empty(), "--checkpoint is required unless --oracle is given");
      PretrainModel model = load_pretrain_model(prb_ckpt);
      const TransitionFn enc = encoder_transition(model);
      const DecodeFn dec = decoder_fn(model);
      report = probe_report(enc, &dec, &model.pyramid, data, ids, cfg.probe, cfg.seed, prb_ckpt);
      // composition grids in the style of the qualitative figures
      Rng grid_rng = make_stream(cfg.seed, "probe.grids");
      json grids = json::array();
      for (int g = 0; g < cfg.probe.n_grids; ++g) {
        const int ep_id = ids[grid_rng.uniform_int(ids.size())];
        const Episode ep = data.load(ep_id);
        const int span = 2 * cfg.probe.stride;
        if (ep.length() <= span) continue;
        const int a = static_cast<int>(grid_rng.uniform_range(0, ep.length() - 1 - span));
        const View v = static_cast<View>(grid_rng.uniform_int(kNumViews));
        const CompositionGrid cg = composition_grid(ep, v, a, a + cfg.probe.stride,
                                                    a + 2 * cfg.probe.stride, enc, dec);
        char name[64];
        std::snprintf(name, sizeof(name), "grid_%02d.png", g);
        save_grid(cg, (fs::path(out) / name).string());
        grids.push_back(json{{"file", name},
                             {"episode", ep_id},
                             {"anchor", a},
                             {"view", view_name(v)},
                             {"mse_composed_vs_direct", cg.mse_composed_vs_direct}});
      }
      std::ofstream gf(fs::path(out) / "grids.json");
      gf << grids.dump(2) << "\n";
    }
    save_report(report, (fs::path(out) / "report.json").string());
    std::cout << "probe report written to " << out << "/report.json\n";
  });

  // ---- train-policy ----
  auto* tp = app.add_subcommand("train-policy", "train the flow-matching policy");
  CommonOpts tp_o;
  add_common(tp, tp_o);
  std::string tp_data, tp_out, tp_mode, tp_encoder;
  bool tp_force = false;
  tp->add_option("--data", tp_data, "demo dataset directory")->required();
  tp->add_option("--out", tp_out)->required();
  tp->add_option("--mode", tp_mode, "joint|action_only|two_stage|diffusion");
  tp->add_option("--encoder", tp_encoder, "pretrain checkpoint (omit for action_only)");
  tp->add_flag("--force", tp_force);
  tp->callback([&] {
    RunConfig cfg = load_config(tp_o);
    if (!tp_mode.empty()) cfg.policy.mode = tp_mode;
    Dataset demos(tp_data);
    cfg.world = demos.world();
    std::unique_ptr<PretrainModel> enc;
    if (cfg.policy.mode != "action_only") {
      require(!tp_encoder.empty(), "--encoder is required unless mode is action_only");
      enc = std::make_unique<PretrainModel>(load_pretrain_model(tp_encoder));
      cfg.encoder = enc->cfg.encoder;
    }
    cfg.validate();
    const std::string out = resolve_out(tp_out);
    ensure_out(out, tp_force);
    PolicyModel model(cfg);
    if (enc) model.meta["encoder_checkpoint"] = tp_encoder;
    const PolicyTrainResult r = train_policy(model, demos, enc.get(), out);
    std::cout << "train-policy [" << cfg.policy.mode << "] done: steps=" << r.steps_done
              << " loss " << r.first_loss << " -> " << r.last_loss << "\n"
              << "checkpoint: " << r.final_checkpoint << "\n";
  });

  // ---- eval-policy ----
  auto* ev = app.add_subcommand("eval-policy", "closed-loop evaluation on the reaching task");
  CommonOpts ev_o;
  add_common(ev, ev_o);
  std::string ev_ckpt, ev_out, ev_intervention = "none";
  int ev_episodes = -1;
  uint64_t ev_seed = 0;
  bool ev_force = false;
  bool ev_seed_given = false;
  ev->add_option("--checkpoint", ev_ckpt)->required();
  ev->add_option("--out", ev_out)->required();
  ev->add_option("--episodes", ev_episodes);
  ev->add_option("--intervention", ev_intervention, "none|freeze|block|shuffle");
  auto* seed_opt = ev->add_option("--seed", ev_seed);
  ev->add_flag("--force", ev_force);
  ev->callback([&] {
    ev_seed_given = seed_opt->count() > 0;
    load_config(ev_o);  // applies thread settings; model config comes from the checkpoint
    PolicyModel model = load_policy_model(ev_ckpt);
    const int n = ev_episodes > 0 ? ev_episodes : model.cfg.policy.eval_episodes;
    const uint64_t seed = ev_seed_given ? ev_seed : model.cfg.seed;
    const InterventionSpec iv = parse_intervention(ev_intervention);
    const std::string out = resolve_out(ev_out);
    ensure_out(out, ev_force);
    const EvalReport report = eval_policy(model, n, iv, seed);
    std::ofstream f(fs::path(out) / ("eval_" + ev_intervention + ".json"));
    f << report.j.dump(2) << "\n";
    std::cout << "eval [" << ev_intervention << "]: success " << report.success_rate << " over "
              << report.episodes << " episodes\n";
  });

  // ---- intervene ----
  auto* ivc = app.add_subcommand("intervene", "run all intervention arms on one checkpoint");
  CommonOpts iv_o;
  add_common(ivc, iv_o);
  std::string iv_ckpt, iv_out;
  int iv_episodes = -1;
  uint64_t iv_seed = 0;
  bool iv_force = false;
  ivc->add_option("--checkpoint", iv_ckpt)->required();
  ivc->add_option("--out", iv_out)->required();
  ivc->add_option("--episodes", iv_episodes);
  auto* iv_seed_opt = ivc->add_option("--seed", iv_seed);
  ivc->add_flag("--force", iv_force);
  ivc->callback([&] {
    load_config(iv_o);
    const uint64_t hash_before = checkpoint_hash(iv_ckpt);
    PolicyModel model = load_policy_model(iv_ckpt);
    const int n = iv_episodes > 0 ? iv_episodes : model.cfg.policy.eval_episodes;
    const uint64_t seed = iv_seed_opt->count() > 0 ? iv_seed : model.cfg.seed;
    const std::string out = resolve_out(iv_out);
    ensure_out(out, iv_force);
    json arms = json::array();
    for (const std::string name : {"none", "freeze", "block", "shuffle"}) {
      const EvalReport r = eval_policy(model, n, parse_intervention(name), seed);
      arms.push_back(r.j);
      std::cout << "arm " << name << ": success " << r.success_rate << "\n";
    }
    require(checkpoint_hash(iv_ckpt) == hash_before,
            "intervention run mutated the checkpoint");
    std::ofstream f(fs::path(out) / "interventions.json");
    f << arms.dump(2) << "\n";
    emit_intervention_chart(arms, out);
    std::cout << "wrote " << out << "/interventions.json\n";
  });

  // ---- plot ----
  auto* pl = app.add_subcommand("plot", "render probe reports / intervention tables as SVG");
  CommonOpts pl_o;
  add_common(pl, pl_o);
  std::vector<std::string> pl_reports, pl_labels;
  std::string pl_interventions, pl_out;
  bool pl_force = false;
  pl->add_option("--report", pl_reports, "probe report JSON (repeatable)");
  pl->add_option("--label", pl_labels, "series label per report");
  pl->add_option("--interventions", pl_interventions, "interventions.json from `intervene`");
  pl->add_option("--out", pl_out)->required();
  pl->add_flag("--force", pl_force);
  pl->callback([&] {
    load_config(pl_o);
    const std::string out = resolve_out(pl_out);
    ensure_out(out, pl_force);
    require(!pl_reports.empty() || !pl_interventions.empty(),
            "plot: need --report or --interventions");
    if (!pl_reports.empty()) {
      std::vector<ProbeReport> reports;
      std::vector<std::string> labels = pl_labels;
      for (size_t i = 0; i < pl_reports.size(); ++i) {
        reports.push_back(load_report(pl_reports[i]));
        if (labels.size() <= i) labels.push_back("run" + std::to_string(i));
      }
      labels.resize(reports.size());
      const auto files = emit_probe_plots(reports, labels, out);
      std::cout << "wrote " << files.size() << " plots to " << out << "\n";
    }
    if (!pl_interventions.empty()) {
      std::ifstream f(pl_interventions);
      require(f.good(), "cannot read " + pl_interventions);
      json arms;
      f >> arms;
      emit_intervention_chart(arms, out);
      std::cout << "wrote interventions chart to " << out << "\n";
    }
  });

  // ---- print-config ----
  auto* pcfg = app.add_subcommand("print-config", "dump the resolved configuration");
  CommonOpts pcfg_o;
  add_common(pcfg, pcfg_o);
  pcfg->callback([&] {
    const RunConfig cfg = load_config(pcfg_o);
    std::cout << config_to_json(cfg).dump(2) << "\n";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
}
