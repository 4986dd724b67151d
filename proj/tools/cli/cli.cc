// Copyright 2026 The MVR Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "cli.h"

#include <CLI11.hpp>
#include <fmt/core.h>
#include <json.hpp>

#include <algorithm>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "mvr/checkpoint.h"
#include "mvr/error.h"
#include "mvr/experiment.h"
#include "mvr/http_service.h"
#include "mvr/log.h"

namespace mvr::cli {
namespace fs = std::filesystem;

namespace {

struct Options {
  std::string config;
  std::string out;
  std::string data;
  std::string checkpoint;
  std::string index;
  std::string input;
  std::string host = "127.0.0.1";
  std::optional<std::uint64_t> seed;
  int port = 8080;
};

std::string join(const std::string& dir, const char* name) {
  return (fs::path(dir) / name).string();
}

void require_file(const std::string& path, const char* what) {
  if (!fs::is_regular_file(path)) {
    throw ConfigError(std::string(what) + " not found: " + path);
  }
}

void require_dir_flag(const std::string& value, const char* flag) {
  if (value.empty()) throw ConfigError(std::string(flag) + " is required");
}

RunConfig load_config(const Options& o) {
  if (o.config.empty()) throw ConfigError("--config is required");
  require_file(o.config, "config");
  std::ifstream in(o.config);
  std::stringstream buf;
  buf << in.rdbuf();
  std::string text = buf.str();
  if (o.seed) {
    // The flag overrides the file, so patch the JSON before strict parsing.
    auto j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_object()) {
      j["seed"] = *o.seed;
      text = j.dump();
    }
  }
  return parse_run_config(text);
}

void prepare_out(const std::string& dir) {
  require_dir_flag(dir, "--out");
  fs::create_directories(dir);
}

void echo_config(const RunConfig& c, const std::string& dir) {
  std::ofstream out(join(dir, kConfigEcho));
  out << to_json_string(c) << '\n';
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << text;
}

// Loads the generated world and logs, checking they match the config.
PreparedData load_data(const RunConfig& c, const Options& o) {
  require_dir_flag(o.data, "--data");
  const std::string world_path = join(o.data, kWorldFile);
  require_file(world_path, "world file");
  require_file(join(o.data, kOrganicFile), "engagement log");
  require_file(join(o.data, kExplicitFile), "explicit log");
  PreparedData p;
  p.world = load_world(world_path);
  if (!(p.world.config == c.world)) {
    throw ConfigError("data in " + o.data +
                      " was generated from a different world config or seed");
  }
  p.logs.organic = load_engagements(join(o.data, kOrganicFile));
  p.logs.explicit_log = load_engagements(join(o.data, kExplicitFile));
  p.data = build_dataset(p.world, p.logs, c.data);
  return p;
}

struct LoadedModels {
  ParamStore implicit_params;
  ParamStore explicit_params;
};

LoadedModels load_models(const RunConfig& c, const Options& o) {
  require_dir_flag(o.checkpoint, "--checkpoint");
  const std::string ip = join(o.checkpoint, kImplicitCheckpoint);
  const std::string ep = join(o.checkpoint, kExplicitCheckpoint);
  require_file(ip, "implicit checkpoint");
  require_file(ep, "explicit checkpoint");
  LoadedModels m{load_checkpoint(ip), load_checkpoint(ep)};
  // Shape agreement with the config is checked by binding every parameter.
  ImplicitModel im(c.model_implicit);
  ExplicitModel em(c.model_explicit);
  ParamStore fresh_i, fresh_e;
  Rng rng(0);
  im.init_params(fresh_i, rng);
  em.init_params(fresh_e, rng);
  auto check = [](const ParamStore& want, const ParamStore& got, const char* which) {
    for (const auto& name : want.names()) {
      if (!got.contains(name) || got.value(name).shape() != want.value(name).shape()) {
        throw ConfigError(std::string(which) + " checkpoint does not match the config at " +
                          name);
      }
    }
  };
  check(fresh_i, m.implicit_params, "implicit");
  check(fresh_e, m.explicit_params, "explicit");
  return m;
}

std::string fmt_hr(const EvalResult& r) {
  std::string s;
  for (const auto& [k, v] : r.hit_rate) s += fmt::format(" HR@{}={:.4f}", k, v);
  return s;
}

int cmd_gen_data(const Options& o, std::ostream& out) {
  const RunConfig c = load_config(o);
  prepare_out(o.out);
  const World world = gen_world(c.world);
  const Logs logs = gen_logs(world);
  save_world(world, join(o.out, kWorldFile));
  save_engagements(c.world, logs.organic, join(o.out, kOrganicFile));
  save_engagements(c.world, logs.explicit_log, join(o.out, kExplicitFile));
  echo_config(c, o.out);
  out << fmt::format("world: {} items, {} users; {} organic and {} explicit records -> {}\n",
                     world.items.size(), world.users.size(), logs.organic.size(),
                     logs.explicit_log.size(), o.out);
  return kExitOk;
}

int cmd_train(const Options& o, std::ostream& out) {
  const RunConfig c = load_config(o);
  const PreparedData p = load_data(c, o);
  prepare_out(o.out);
  auto progress = [](const char* which) {
    return [which](int epoch, double loss) {
      log_info(fmt::format("{} epoch {} loss {:.5f}", which, epoch, loss));
    };
  };
  log_info(fmt::format("training implicit model on {} examples", p.data.implicit_train.size()));
  const auto imp = train_implicit(c.model_implicit, c.trainer, p.data, progress("implicit"));
  log_info(fmt::format("training explicit model on {} examples", p.data.explicit_train.size()));
  const auto exp = train_explicit(c.model_explicit, c.trainer, p.data, p.data.explicit_train,
                                  progress("explicit"));
  save_checkpoint(imp.params, join(o.out, kImplicitCheckpoint));
  save_checkpoint(exp.params, join(o.out, kExplicitCheckpoint));
  write_loss_curve(join(o.out, "loss_implicit.csv"), imp.result.epoch_loss);
  write_loss_curve(join(o.out, "loss_explicit.csv"), exp.result.epoch_loss);
  echo_config(c, o.out);
  out << fmt::format("implicit loss {:.4f} -> {:.4f}; explicit loss {:.4f} -> {:.4f}\n",
                     imp.result.epoch_loss.front(), imp.result.epoch_loss.back(),
                     exp.result.epoch_loss.front(), exp.result.epoch_loss.back());
  return kExitOk;
}

int cmd_build_index(const Options& o, std::ostream& out) {
  const RunConfig c = load_config(o);
  require_dir_flag(o.data, "--data");
  require_file(join(o.data, kWorldFile), "world file");
  const World world = load_world(join(o.data, kWorldFile));
  if (!(world.config == c.world)) throw ConfigError("data does not match the config");
  const auto models = load_models(c, o);
  prepare_out(o.out);
  const ItemCatalog catalog = make_catalog(world);
  const ImplicitModel im(c.model_implicit);
  const ExplicitModel em(c.model_explicit);
  const auto ii = HnswIndex::build(make_corpus(im, models.implicit_params, catalog), c.index);
  ii.save(join(o.out, kImplicitIndex));
  const auto ei = HnswIndex::build(make_corpus(em, models.explicit_params, catalog), c.index);
  ei.save(join(o.out, kExplicitIndex));
  echo_config(c, o.out);
  out << fmt::format("indexed {} items (max level {}) -> {}\n", ii.size(), ii.max_level(),
                     o.out);
  return kExitOk;
}

int cmd_eval(const Options& o, std::ostream& out) {
  const RunConfig c = load_config(o);
  const auto models = load_models(c, o);
  const PreparedData p = load_data(c, o);
  prepare_out(o.out);
  const ImplicitModel im(c.model_implicit);
  const ExplicitModel em(c.model_explicit);
  const auto icorpus = make_corpus(im, models.implicit_params, p.data.catalog);
  const auto ecorpus = make_corpus(em, models.explicit_params, p.data.catalog);

  std::vector<MetricRow> rows;
  const auto imp = evaluate_implicit(im, models.implicit_params, p, icorpus,
                                     eval_options(c.eval, c.seed));
  for (auto& r : metric_rows(imp, "implicit", c.seed)) rows.push_back(r);
  for (std::size_t k : c.eval.k_rank) {
    rows.push_back({"hr@" + std::to_string(k), "random",
                    std::min(1.0, double(k) / double(icorpus.size())), c.seed});
  }
  out << fmt::format("implicit:{} coverage={:.4f} ({} records)\n", fmt_hr(imp), imp.coverage,
                     imp.ranks.size());
  if (!p.data.explicit_eval.empty()) {
    const auto exp = evaluate_explicit_filtered(em, models.explicit_params, p, ecorpus,
                                                eval_options(c.eval, c.seed));
    for (auto& r : metric_rows(exp, "explicit_filtered", c.seed)) rows.push_back(r);
    out << fmt::format("explicit (filtered):{} ({} records)\n", fmt_hr(exp), exp.ranks.size());
  }

  if (!o.index.empty()) {
    require_file(join(o.index, kImplicitIndex), "implicit index");
    require_file(join(o.index, kExplicitIndex), "explicit index");
    const auto ii = HnswIndex::load(join(o.index, kImplicitIndex));
    const auto ei = HnswIndex::load(join(o.index, kExplicitIndex));
    const Retriever retriever(im, models.implicit_params, ii, em, models.explicit_params, ei,
                              c.serving);
    std::vector<CandidateList> imp_lists, exp_lists;
    std::size_t used = 0;
    for (const auto& rec : p.data.eval) {
      if (c.eval.max_users && used++ >= c.eval.max_users) break;
      RetrievalRequest req;
      req.user_id = rec.user_id;
      req.user = *rec.user;
      req.sequence = rec.seq.materialize();
      const auto res = retriever.retrieve(req);
      CandidateList a, b;
      for (const auto& l : res.implicit_lists) a.insert(a.end(), l.begin(), l.end());
      for (const auto& l : res.explicit_lists) b.insert(b.end(), l.begin(), l.end());
      imp_lists.push_back(std::move(a));
      exp_lists.push_back(std::move(b));
    }
    const auto ov = overlap_report(imp_lists, exp_lists);
    rows.push_back({"overlap_jaccard", "serving", ov.jaccard, c.seed});
    rows.push_back({"overlap_intersection_over_min", "serving", ov.intersection_over_min,
                    c.seed});
    out << fmt::format("overlap: jaccard={:.4f} intersection/min={:.4f} over {} users\n",
                       ov.jaccard, ov.intersection_over_min, ov.users);
  }

  for (const auto& rec : p.data.eval) {
    if (rec.seq.timeline && EngagementSequence{rec.seq.materialize()}.num_valid() > 0 &&
        c.model_implicit.interest.is_routing()) {
      write_divergence_trajectory(im, models.implicit_params, rec.seq.materialize(), c.seed,
                                  join(o.out, "divergence_trajectory.csv"));
      break;
    }
  }
  write_metrics_csv(rows, join(o.out, kMetricsFile));
  write_text(join(o.out, kSummaryFile), metrics_summary_json(rows) + "\n");
  echo_config(c, o.out);
  return kExitOk;
}

int cmd_ablate(const Options& o, std::ostream& out) {
  const RunConfig c = load_config(o);
  prepare_out(o.out);
  const auto rows = run_ablation(c);
  write_metrics_csv(rows, join(o.out, "ablation.csv"));
  write_text(join(o.out, kSummaryFile), metrics_summary_json(rows) + "\n");
  echo_config(c, o.out);
  out << fmt::format("{} rows -> {}\n", rows.size(), join(o.out, "ablation.csv"));
  return kExitOk;
}

HttpServer* g_server = nullptr;

extern "C" void on_signal(int) {
  if (g_server) g_server->stop();
}

int cmd_serve(const Options& o, std::ostream& out) {
  const RunConfig c = load_config(o);
  auto models = load_models(c, o);
  require_dir_flag(o.index, "--index");
  require_file(join(o.index, kImplicitIndex), "implicit index");
  require_file(join(o.index, kExplicitIndex), "explicit index");
  require_dir_flag(o.data, "--data");
  require_file(join(o.data, kWorldFile), "world file");
  const World world = load_world(join(o.data, kWorldFile));
  if (!(world.config == c.world)) throw ConfigError("data does not match the config");
  RetrievalService service(c, make_catalog(world), std::move(models.implicit_params),
                           std::move(models.explicit_params),
                           HnswIndex::load(join(o.index, kImplicitIndex)),
                           HnswIndex::load(join(o.index, kExplicitIndex)));
  if (!o.input.empty()) {
    // One request from a file, answered on stdout without opening a socket.
    require_file(o.input, "request");
    std::ifstream in(o.input);
    std::stringstream buf;
    buf << in.rdbuf();
    const auto reply = service.handle("POST", "/retrieve", buf.str());
    out << reply.body << '\n';
    return reply.status == 200 ? kExitOk : kExitRuntime;
  }
  HttpServer server(service);
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  server.listen(o.host, o.port);
  g_server = nullptr;
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-embedding retrieval: data generation, training, indexing, "
               "evaluation and serving."};
  app.require_subcommand(1);
  Options o;
  auto add_common = [&](CLI::App* sub, bool data, bool ckpt, bool index, bool out_dir) {
    sub->add_option("--config", o.config, "Run config JSON")->required();
    sub->add_option("--seed", o.seed, "Override the config seed");
    if (out_dir) sub->add_option("--out", o.out, "Output directory")->required();
    if (data) sub->add_option("--data", o.data, "Directory written by gen-data");
    if (ckpt) sub->add_option("--checkpoint", o.checkpoint, "Directory written by train");
    if (index) sub->add_option("--index", o.index, "Directory written by build-index");
  };
  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic world and logs");
  add_common(gen, false, false, false, true);
  auto* train = app.add_subcommand("train", "Train the implicit and explicit models");
  add_common(train, true, false, false, true);
  auto* build = app.add_subcommand("build-index", "Build HNSW indexes of both item towers");
  add_common(build, true, true, false, true);
  auto* eval = app.add_subcommand("eval", "Offline hit rate, coverage and overlap");
  add_common(eval, true, true, true, true);
  auto* ablate = app.add_subcommand("ablate", "Run the ablation grid");
  add_common(ablate, false, false, false, true);
  auto* serve = app.add_subcommand("serve", "Serve POST /retrieve and GET /healthz");
  add_common(serve, true, true, true, false);
  serve->add_option("--port", o.port, "Listen port");
  serve->add_option("--host", o.host, "Listen address");
  serve->add_option("--input", o.input, "Answer one request file and exit");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*gen) return cmd_gen_data(o, out);
    if (*train) return cmd_train(o, out);
    if (*build) return cmd_build_index(o, out);
    if (*eval) return cmd_eval(o, out);
    if (*ablate) return cmd_ablate(o, out);
    if (*serve) return cmd_serve(o, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitConfig;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace mvr::cli
