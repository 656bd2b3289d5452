// ablah: ingest, synth, train, evaluate, explain, sweep and sample-paths.

#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "ablah/bundle.hpp"
#include "ablah/config.hpp"
#include "ablah/explain.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace ablah;

namespace {

enum ExitCode { kOk = 0, kConfigError = 2, kDataError = 3, kRuntimeError = 4 };

struct Common {
  std::string config_file;
  std::string run;  // earlier run directory to take config and checkpoint from
  std::map<std::string, std::string> overrides;
};

void add_common(CLI::App* cmd, Common& common) {
  cmd->add_option("--config", common.config_file, "configuration file (key = value lines)");
  cmd->add_option("--run", common.run, "earlier run directory; its config.toml is the base configuration");
  for (const ConfigKey& k : config_keys()) {
    cmd->add_option_function<std::string>(
        "--" + k.name, [&common, name = k.name](const std::string& v) { common.overrides[name] = v; }, k.help);
  }
}

RunConfig resolve_config(const Common& common) {
  RunConfig config;
  config.sync();
  if (!common.run.empty()) {
    const fs::path base = fs::path(common.run) / "config.toml";
    if (!fs::exists(base)) throw ConfigError("run directory " + common.run + " has no config.toml");
    config = load_config_file(base.string());
  }
  if (!common.config_file.empty()) {
    std::ifstream in(common.config_file);
    if (!in) throw ConfigError("cannot open configuration file " + common.config_file);
    std::stringstream ss;
    ss << in.rdbuf();
    apply_config_text(config, ss.str(), common.config_file);
  }
  for (const ConfigKey& k : config_keys()) {
    if (auto it = common.overrides.find(k.name); it != common.overrides.end()) set_config_value(config, k.name, it->second);
  }
  config.validate();
  return config;
}

std::string utc_stamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y%m%d-%H%M%S");
  return os.str();
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << text;
}

struct RunDir {
  fs::path path;
  nlohmann::ordered_json manifest;

  RunDir(const RunConfig& config, const std::string& command) {
    const std::string hash = config_hash(config);
    path = fs::path(config.runs_dir) / (utc_stamp() + "-" + command + "-" + hash);
    for (int n = 2; fs::exists(path); ++n) {
      path = fs::path(config.runs_dir) / (utc_stamp() + "-" + command + "-" + hash + "-" + std::to_string(n));
    }
    fs::create_directories(path);
    write_text(path / "config.toml", config_to_text(config));
    manifest["command"] = command;
    manifest["created_utc"] = utc_stamp();
    manifest["config_hash"] = hash;
    nlohmann::ordered_json settings;
    for (const ConfigKey& k : config_keys()) settings[k.name] = k.get(config);
    manifest["config"] = settings;
  }

  void save() const { write_text(path / "manifest.json", manifest.dump(2) + "\n"); }
};

LoadedGraph load_graph(const RunConfig& config) {
  if (!config.data.graph.empty()) return read_bundle(config.data.graph);
  if (config.data.interactions.empty()) {
    throw ConfigError("no input graph: set `graph` to an ingested bundle or `interactions` to a TSV file");
  }
  std::vector<fs::path> aux(config.data.aux.begin(), config.data.aux.end());
  LoadOptions options;
  options.min_user_interactions = config.data.min_user_interactions;
  options.directed_edge_types = config.data.directed_edge_types;
  return load_tsv(config.data.interactions, aux, options);
}

std::string hex32(std::uint32_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(8) << std::setfill('0') << v;
  return os.str();
}

fs::path checkpoint_path(const Common& common, const std::string& explicit_path) {
  fs::path p = explicit_path;
  if (p.empty() && !common.run.empty()) p = fs::path(common.run) / "checkpoint.bin";
  if (p.empty()) throw ConfigError("no model given: pass --checkpoint FILE or --run DIR of a training run");
  if (!fs::exists(p)) {
    throw DataError("checkpoint " + p.string() + " does not exist (run `ablah train` first, or point --checkpoint at it)");
  }
  return p;
}

NodeId require_node(const LoadedGraph& g, const std::string& type, const std::string& key) {
  const auto id = g.keys.find(type, key);
  if (!id) throw DataError("unknown " + type + " '" + key + "'");
  return *id;
}

nlohmann::ordered_json report_summary(const EvalReport& r) {
  nlohmann::ordered_json j;
  for (std::size_t n = 0; n < r.ks.size(); ++n) {
    const std::string k = std::to_string(r.ks[n]);
    j["HR@" + k] = r.hr[n];
    j["NDCG@" + k] = r.ndcg[n];
    j["POP_HR@" + k] = r.pop_hr[n];
    j["POP_NDCG@" + k] = r.pop_ndcg[n];
  }
  j["users_evaluated"] = r.users.size();
  j["users_excluded"] = r.excluded;
  return j;
}

struct TrainOutcome {
  TrainState state;
  std::vector<EpochLog> logs;
};

TrainOutcome run_training(const RunConfig& config, const LoadedGraph& data, const Split& split,
                          const fs::path& out_dir, const std::string& resume) {
  TrainOutcome out;
  if (!resume.empty()) {
    out.state = load_checkpoint(resume);
    if (model_config_json(out.state.model) != model_config_json(config.model)) {
      throw ConfigError("checkpoint " + resume + " was trained with a different model configuration");
    }
  } else {
    out.state = init_state(split.train, config.model, config.train.seed);
  }
  const auto t0 = std::chrono::steady_clock::now();
  TrainHooks hooks;
  hooks.on_epoch_end = [&](const TrainState& s, std::size_t epoch) -> std::optional<double> {
    if (config.train.checkpoint_every > 0 && epoch % config.train.checkpoint_every == 0) {
      fs::create_directories(out_dir / "checkpoints");
      save_checkpoint(s, out_dir / "checkpoints" / ("epoch-" + std::to_string(epoch) + ".bin"));
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cerr << "epoch " << epoch << "/" << config.train.epochs << " done at " << std::fixed << std::setprecision(1)
              << secs << "s\n";
    return std::nullopt;
  };
  out.logs = train(split.train, out.state, config.train, config.adversarial, hooks, &data.graph);
  for (const EpochLog& l : out.logs) {
    std::cerr << "epoch " << l.epoch << "  loss " << std::setprecision(5) << l.mean_loss << "  instances "
              << l.processed << "  no-path " << l.skipped << "  lr " << l.learning_rate << "\n";
  }
  return out;
}

nlohmann::ordered_json epoch_json(const std::vector<EpochLog>& logs) {
  auto arr = nlohmann::ordered_json::array();
  for (const EpochLog& l : logs) {
    arr.push_back({{"epoch", l.epoch},
                   {"mean_loss", l.mean_loss},
                   {"instances", l.processed},
                   {"skipped_no_path", l.skipped},
                   {"learning_rate", l.learning_rate}});
  }
  return arr;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ablah: path-based recommendation over heterogeneous information networks"};
  app.require_subcommand(1);
  Common common;

  auto* ingest = app.add_subcommand("ingest", "load TSV edge lists and write a graph bundle");
  add_common(ingest, common);
  std::string ingest_out;
  ingest->add_option("--out", ingest_out, "bundle directory (default: <run>/graph)");

  auto* synth = app.add_subcommand("synth", "write the planted-structure synthetic dataset as TSV");
  add_common(synth, common);
  std::string synth_out;
  synth->add_option("--out", synth_out, "output directory (default: <run>/data)");

  auto* train_cmd = app.add_subcommand("train", "train a model and write checkpoint.bin");
  add_common(train_cmd, common);
  std::string resume;
  bool train_eval = false;
  train_cmd->add_option("--resume", resume, "continue from this checkpoint");
  train_cmd->add_flag("--evaluate", train_eval, "evaluate after training");

  auto* eval_cmd = app.add_subcommand("evaluate", "rank held-out items and report HR@K / NDCG@K");
  add_common(eval_cmd, common);
  std::string eval_ckpt;
  eval_cmd->add_option("--checkpoint", eval_ckpt, "model checkpoint (default: <run>/checkpoint.bin)");

  auto* explain_cmd = app.add_subcommand("explain", "show the paths behind one user-item score");
  add_common(explain_cmd, common);
  std::string explain_ckpt, compare_ckpt, user_key, item_key;
  explain_cmd->add_option("--checkpoint", explain_ckpt, "model checkpoint (default: <run>/checkpoint.bin)");
  explain_cmd->add_option("--compare", compare_ckpt, "second (typically unidirectional) checkpoint to compare");
  explain_cmd->add_option("--user", user_key, "user key")->required();
  explain_cmd->add_option("--item", item_key, "item key")->required();

  auto* sweep_cmd = app.add_subcommand("sweep", "one-factor sweep writing value,HR@10,NDCG@10 rows");
  add_common(sweep_cmd, common);
  std::string sweep_param, sweep_values;
  sweep_cmd->add_option("--param", sweep_param, "configuration key to vary")->required();
  sweep_cmd->add_option("--values", sweep_values, "comma list or start:stop:step")->required();

  auto* paths_cmd = app.add_subcommand("sample-paths", "sample connecting paths for one user-item pair");
  add_common(paths_cmd, common);
  std::string paths_user, paths_item, paths_cache;
  paths_cmd->add_option("--user", paths_user, "user key")->required();
  paths_cmd->add_option("--item", paths_item, "item key")->required();
  paths_cmd->add_option("--cache", paths_cache, "also append the paths to this cache file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    const RunConfig config = resolve_config(common);

    if (*ingest) {
      LoadedGraph data = load_graph(config);
      RunDir run(config, "ingest");
      const fs::path out = ingest_out.empty() ? run.path / "graph" : fs::path(ingest_out);
      write_bundle(data, out);
      run.manifest["bundle"] = out.string();
      run.manifest["graph_crc32"] = hex32(graph_checksum(data.graph));
      run.manifest["lines"] = data.summary.lines;
      run.manifest["duplicate_edges"] = data.summary.duplicate_edges;
      run.manifest["dropped_users"] = data.summary.dropped_users;
      run.save();
      std::cout << format_stats(data.graph.stats());
      std::cout << "duplicate edges skipped: " << data.summary.duplicate_edges
                << ", users dropped: " << data.summary.dropped_users << "\n";
      std::cout << "graph checksum: " << hex32(graph_checksum(data.graph)) << "\nbundle: " << out.string() << "\n";
    } else if (*synth) {
      RunDir run(config, "synth");
      const fs::path out = synth_out.empty() ? run.path / "data" : fs::path(synth_out);
      write_synth(generate_synth(config.synth), out);
      run.manifest["output"] = out.string();
      run.save();
      std::cout << "wrote " << (out / "interactions.tsv").string() << " and " << (out / "aux.tsv").string() << "\n";
    } else if (*train_cmd) {
      LoadedGraph data = load_graph(config);
      const Split split = leave_one_out_split(data.graph, config.split);
      RunDir run(config, "train");
      run.manifest["graph_crc32"] = hex32(graph_checksum(data.graph));
      if (!resume.empty()) run.manifest["resumed_from"] = resume;
      TrainOutcome t = run_training(config, data, split, run.path, resume);
      save_checkpoint(t.state, run.path / "checkpoint.bin");
      write_text(run.path / "checkpoint.manifest", checkpoint_manifest(t.state));
      run.manifest["epochs"] = epoch_json(t.logs);
      if (train_eval) {
        const EvalReport report = evaluate(t.state.params, t.state.model, data.graph, split, config.eval);
        write_text(run.path / "eval.json", report.to_json() + "\n");
        write_text(run.path / "eval.txt", report.to_table());
        run.manifest["evaluation"] = report_summary(report);
        std::cout << report.to_table();
      }
      run.save();
      std::cout << "run: " << run.path.string() << "\n";
    } else if (*eval_cmd) {
      const fs::path ckpt = checkpoint_path(common, eval_ckpt);
      const TrainState state = load_checkpoint(ckpt);
      LoadedGraph data = load_graph(config);
      const Split split = leave_one_out_split(data.graph, config.split);
      const EvalReport report = evaluate(state.params, state.model, data.graph, split, config.eval);
      RunDir run(config, "evaluate");
      write_text(run.path / "eval.json", report.to_json() + "\n");
      write_text(run.path / "eval.txt", report.to_table());
      run.manifest["checkpoint"] = ckpt.string();
      run.manifest["graph_crc32"] = hex32(graph_checksum(data.graph));
      run.manifest["evaluation"] = report_summary(report);
      run.save();
      std::cout << report.to_table() << "run: " << run.path.string() << "\n";
    } else if (*explain_cmd) {
      const fs::path ckpt = checkpoint_path(common, explain_ckpt);
      const TrainState state = load_checkpoint(ckpt);
      LoadedGraph data = load_graph(config);
      const Split split = leave_one_out_split(data.graph, config.split);
      const NodeId user = require_node(data, "User", user_key);
      const NodeId item = require_node(data, "Item", item_key);
      const Explanation e = explain(state.params, state.model, split.train, data.keys, user, item,
                                    config.train.k_paths, config.train.l_max, config.train.seed);
      RunDir run(config, "explain");
      write_text(run.path / "explanation.json", e.to_json() + "\n");
      run.manifest["checkpoint"] = ckpt.string();
      std::cout << "user " << user_key << ", item " << item_key << ", predicted " << std::setprecision(4)
                << e.probability << "\n"
                << e.to_text();
      if (!compare_ckpt.empty()) {
        const TrainState other = load_checkpoint(compare_ckpt);
        const DirectionComparison cmp =
            compare_directions(state.params, state.model, other.params, other.model, split.train, data.keys, user,
                               item, config.train.k_paths, config.train.l_max, config.train.seed);
        write_text(run.path / "directions.txt", cmp.to_text());
        run.manifest["compared_with"] = compare_ckpt;
        std::cout << "\n" << cmp.to_text();
      }
      run.save();
      std::cout << "run: " << run.path.string() << "\n";
    } else if (*sweep_cmd) {
      require_sweepable(sweep_param);
      const auto values = parse_sweep_values(sweep_values);
      if (std::find(config.eval.ks.begin(), config.eval.ks.end(), 10) == config.eval.ks.end()) {
        throw ConfigError("sweep reports HR@10; add 10 to eval_ks");
      }
      std::vector<RunConfig> grid;
      for (const auto& v : values) {
        RunConfig c = config;
        set_config_value(c, sweep_param, v);
        c.validate();
        grid.push_back(c);
      }
      LoadedGraph data = load_graph(config);
      RunDir run(config, "sweep");
      std::ofstream csv(run.path / "sweep.csv");
      csv << sweep_param << ",hr10,ndcg10\n";
      auto rows = nlohmann::ordered_json::array();
      for (std::size_t n = 0; n < grid.size(); ++n) {
        const RunConfig& c = grid[n];
        std::cerr << "== " << sweep_param << " = " << values[n] << "\n";
        const Split split = leave_one_out_split(data.graph, c.split);
        const fs::path point = run.path / ("point-" + std::to_string(n));
        fs::create_directories(point);
        TrainOutcome t = run_training(c, data, split, point, "");
        const EvalReport report = evaluate(t.state.params, t.state.model, data.graph, split, c.eval);
        write_text(point / "eval.json", report.to_json() + "\n");
        csv << values[n] << "," << std::setprecision(10) << report.hr_at(10) << "," << report.ndcg_at(10) << "\n"
            << std::flush;
        rows.push_back({{"value", values[n]}, {"HR@10", report.hr_at(10)}, {"NDCG@10", report.ndcg_at(10)}});
        std::cout << sweep_param << " = " << values[n] << "  HR@10 " << std::fixed << std::setprecision(4)
                  << report.hr_at(10) << "  NDCG@10 " << report.ndcg_at(10) << "\n";
      }
      run.manifest["sweep"] = {{"param", sweep_param}, {"points", rows}};
      run.save();
      std::cout << "csv: " << (run.path / "sweep.csv").string() << "\n";
    } else if (*paths_cmd) {
      LoadedGraph data = load_graph(config);
      const NodeId user = require_node(data, "User", paths_user);
      const NodeId item = require_node(data, "Item", paths_item);
      const PathSet set = sample_paths(data.graph, user, item, config.train.k_paths, config.train.l_max,
                                       config.train.seed);
      if (set.empty()) std::cout << "no path within l_max = " << config.train.l_max << "\n";
      for (const Path& p : set.paths) {
        for (std::size_t l = 0; l < p.size(); ++l) {
          std::cout << (l ? " -> " : "") << data.graph.node_type(p.nodes[l].type).name() << ":"
                    << data.keys.key(p.nodes[l]);
        }
        std::cout << "\n";
      }
      if (!paths_cache.empty()) {
        std::ofstream cache(paths_cache, std::ios::app);
        if (!cache) throw std::runtime_error("cannot write " + paths_cache);
        write_path_cache(cache, data.graph, set.paths);
      }
    }
    return kOk;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kConfigError;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
}
