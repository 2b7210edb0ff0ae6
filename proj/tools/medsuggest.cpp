#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "medsuggest/checkpoint.hpp"
#include "medsuggest/eval.hpp"
#include "medsuggest/kernels.hpp"
#include "medsuggest/trainer.hpp"
#include "medsuggest/world.hpp"
#include "medsuggest/worldgen.hpp"

#ifdef MEDSUGGEST_WITH_SERVICE
#include "medsuggest/consult_http.hpp"
#endif

namespace fs = std::filesystem;
using namespace medsuggest;

namespace {

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return nlohmann::json::parse(in);
}

void write_json(const nlohmann::json& doc, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << doc.dump(2) << "\n";
}

std::vector<std::size_t> parse_ks(const std::string& text) {
  std::vector<std::size_t> ks;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const long v = std::stol(item);
    if (v < 1) throw std::invalid_argument("--k values must be >= 1");
    ks.push_back(static_cast<std::size_t>(v));
  }
  if (ks.empty()) throw std::invalid_argument("--k needs at least one value");
  return ks;
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw std::invalid_argument("unknown split '" + s + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stage-wise symptom querying, test suggestion and diagnosis agent"};
  app.require_subcommand(1);

  fs::path spec_path, out_path, world_path, data_path, train_path, val_path, config_path, ckpt_path, trace_path;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  std::string split = "train", ks_text = "1,3,5";
  std::size_t threads = 0;

  auto* gen_world = app.add_subcommand("gen-world", "Generate a world (CPTs) from a recipe");
  gen_world->add_option("--spec", spec_path, "recipe JSON")->required()->check(CLI::ExistingFile);
  gen_world->add_option("--out", out_path, "world JSON")->required();

  auto* gen_data = app.add_subcommand("gen-data", "Sample synthetic patients from a world");
  gen_data->add_option("--world", world_path)->required()->check(CLI::ExistingFile);
  gen_data->add_option("--n", n)->required()->check(CLI::PositiveNumber);
  gen_data->add_option("--seed", seed)->required();
  gen_data->add_option("--split", split, "train|val|test (recorded only)");
  gen_data->add_option("--out", out_path, "patients CSV")->required();

  auto* train_cmd = app.add_subcommand("train", "Train a policy with REINFORCE");
  train_cmd->add_option("--world", world_path)->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--train", train_path)->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--val", val_path)->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--config", config_path, "train config JSON")->check(CLI::ExistingFile);
  train_cmd->add_option("--seed", seed)->required();
  train_cmd->add_option("--threads", threads, "overrides the config's collection threads");
  train_cmd->add_option("--out", out_path, "output directory")->required();

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  eval_cmd->add_option("--world", world_path)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--data", data_path)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--checkpoint", ckpt_path)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--config", config_path, "train config JSON (reward settings, k)")->check(CLI::ExistingFile);
  eval_cmd->add_option("--k", ks_text, "comma-separated k values");
  eval_cmd->add_option("--trace", trace_path, "write per-step JSONL traces");
  eval_cmd->add_option("--out", out_path, "output directory")->required();

#ifdef MEDSUGGEST_WITH_SERVICE
  std::string host = "127.0.0.1";
  int port = 8080;
  fs::path static_dir, session_dir;
  auto* serve_cmd = app.add_subcommand("serve", "Serve a checkpoint as a consultation API");
  serve_cmd->add_option("--world", world_path)->required()->check(CLI::ExistingFile);
  serve_cmd->add_option("--checkpoint", ckpt_path)->required()->check(CLI::ExistingFile);
  serve_cmd->add_option("--config", config_path, "train config JSON (reward settings, k)")->check(CLI::ExistingFile);
  serve_cmd->add_option("--host", host);
  serve_cmd->add_option("--port", port);
  serve_cmd->add_option("--static", static_dir, "directory of client assets mounted at /")->check(CLI::ExistingDirectory);
  serve_cmd->add_option("--sessions", session_dir, "persist sessions as JSON files here");
#endif

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen_world) {
      const auto world = generate_world(load_recipe(spec_path));
      save_world(world, out_path);
      const auto c = analyse_confusability(world);
      std::cout << "diseases " << world.num_diseases() << ", cpt rows " << world.num_cpt_rows() << ", confusable "
                << c.confusable << ", symptom-only ceiling " << c.symptom_only_ceiling() << "\n";
    } else if (*gen_data) {
      const auto world = load_world(world_path);
      Rng rng(seed);
      const auto ds = generate_dataset(world, n, rng, parse_split(split));
      save_dataset(ds, out_path);
      std::cout << "wrote " << ds.patients.size() << " patients to " << out_path.string() << "\n";
    } else if (*train_cmd) {
      const auto world = load_world(world_path);
      const auto train_set = load_dataset(world, train_path, Split::Train);
      const auto val_set = load_dataset(world, val_path, Split::Val);
      auto config = config_path.empty() ? TrainConfig{} : train_config_from_json(read_json(config_path));
      if (threads) config.threads = threads;
      auto options = config.options(world, seed);
      const auto t0 = std::chrono::steady_clock::now();
      options.on_epoch = [&](const EpochMetrics& m) {
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::cout << "epoch " << m.epoch << "  val top1 " << m.top1 << "  top5 " << m.top5 << "  |L| "
                  << m.avg_suggested << "  J " << m.j_ret << "  " << secs << "s" << std::endl;
      };
      std::cout << "kernels: " << (kernels::active_backend() == kernels::Backend::Avx2 ? "avx2" : "scalar") << "\n";
      const auto result = train(world, train_set, val_set, config.hp, options);

      fs::create_directories(out_path);
      save_checkpoint(result.best, out_path / "checkpoint.bin");
      save_checkpoint(result.last, out_path / "last.bin");
      {
        std::ofstream csv(out_path / "metrics.csv");
        if (!csv) throw std::runtime_error("cannot write metrics.csv");
        write_metrics_csv(result.history, csv);
      }
      nlohmann::json summary = {{"schema_version", 1},
                                {"seed", seed},
                                {"best_epoch", result.best_epoch},
                                {"best_val_top1", result.history.empty() ? 0.0 : result.history[result.best_epoch - 1].top1},
                                {"steps", result.last.step},
                                {"config", train_config_to_json(config)}};
      if (result.history.empty()) summary["best_val_top1"] = nullptr;
      write_json(summary, out_path / "summary.json");
      std::cout << "best epoch " << result.best_epoch << ", checkpoint " << (out_path / "checkpoint.bin").string() << "\n";
    } else if (*eval_cmd) {
      const auto world = load_world(world_path);
      const auto ds = load_dataset(world, data_path, Split::Test);
      const auto ckpt = load_checkpoint(ckpt_path);
      ckpt.params.config().check_matches(world);
      const auto config = config_path.empty() ? TrainConfig{} : train_config_from_json(read_json(config_path));
      StagewiseEnv env(world, config.hp);
      AgentOptions agent;
      agent.tests_enabled = ckpt.tests_enabled;
      const auto report = evaluate(env, ckpt.params, ds, agent, parse_ks(ks_text));
      write_report(report, world, out_path);
      if (!trace_path.empty()) {
        std::ofstream tr(trace_path);
        if (!tr) throw std::runtime_error("cannot write " + trace_path.string());
        for (std::size_t i = 0; i < ds.patients.size(); ++i) {
          const auto traj = collect_episode(env, ckpt.params, ds.patients[i], nullptr, RolloutMode::Eval, agent);
          auto state = env.reset(ds.patients[i]);
          for (const auto& rec : traj.steps) {
            const auto r = env.step(state, rec.action);
            auto line = trace_record(world, state, rec.action, r);
            line["episode"] = i;
            tr << line.dump() << "\n";
            state = r.next;
          }
        }
      }
      std::cout << report_to_json(report, world).dump(2) << "\n";
    }
#ifdef MEDSUGGEST_WITH_SERVICE
    else if (*serve_cmd) {
      const auto world = load_world(world_path);
      auto ckpt = load_checkpoint(ckpt_path);
      const auto config = config_path.empty() ? TrainConfig{} : train_config_from_json(read_json(config_path));
      ServiceOptions sopts;
      sopts.persist_dir = session_dir;
      ConsultService service(world, std::move(ckpt), config.hp, sopts);
      HttpOptions hopts;
      hopts.static_dir = static_dir;
      ConsultHttpServer server(service, hopts);
      std::cout << "listening on http://" << host << ":" << port << std::endl;
      if (!server.listen(host, port)) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
    }
#endif
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
