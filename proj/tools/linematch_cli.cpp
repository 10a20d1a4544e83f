// linematch: gen | train | match | eval
//
// Exit codes: 0 ok, 2 usage, 3 numeric failure, 4 missing artifact, 5 empty input.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "linematch/config.hpp"
#include "linematch/datagen.hpp"
#include "linematch/errors.hpp"
#include "linematch/eval.hpp"
#include "linematch/image.hpp"
#include "linematch/model.hpp"
#include "linematch/render.hpp"
#include "linematch/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace linematch;

namespace {

enum Exit { kOk = 0, kUsage = 2, kNumeric = 3, kMissing = 4, kEmpty = 5 };

struct ExitError : std::runtime_error {
  int code;
  ExitError(int c, const std::string& what) : std::runtime_error(what), code(c) {}
};

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ExitError(kMissing, "cannot open " + path.string());
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ExitError(kUsage, path.string() + " is not valid JSON");
  return j;
}

void write_json_file(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

std::vector<LineSegment> read_lines(const fs::path& path) {
  const json j = read_json_file(path);
  if (!j.is_array()) throw ExitError(kUsage, path.string() + ": expected an array of [x0,y0,x1,y1]");
  std::vector<LineSegment> out;
  for (const auto& e : j) {
    if (!e.is_array() || e.size() != 4) throw ExitError(kUsage, path.string() + ": expected [x0,y0,x1,y1] entries");
    out.emplace_back(e[0].get<double>(), e[1].get<double>(), e[2].get<double>(), e[3].get<double>());
  }
  return out;
}

MatchGroundTruth read_gt(const fs::path& path, int n, int m) {
  const json j = read_json_file(path);
  MatchGroundTruth gt;
  try {
    for (const auto& p : j.at("pairs")) gt.pairs.emplace_back(p.at(0).get<int>(), p.at(1).get<int>());
  } catch (const json::exception& e) {
    throw ExitError(kUsage, path.string() + ": " + e.what());
  }
  return MatchGroundTruth::from_pairs(gt.pairs, n, m);
}

struct Common {
  std::string config_path;
  Config resolve() const {
    Config c = config_path.empty() ? Config{} : load_config(config_path);
    return c;
  }
};

Checkpoint open_checkpoint(const std::string& path) {
  if (path.empty() || !fs::exists(path)) throw ExitError(kMissing, "checkpoint not found: " + path);
  return load_checkpoint(path);
}

std::vector<ImagePairRecord> open_manifest(const std::string& path) {
  if (path.empty() || !fs::exists(path)) throw ExitError(kMissing, "manifest not found: " + path);
  auto records = read_manifest(path);
  if (records.empty()) throw ExitError(kEmpty, "manifest is empty: " + path);
  return records;
}

std::string dir_label(const AblationToggles& t) {
  std::string s = t.label();
  std::replace(s.begin(), s.end(), '/', '-');
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Line segment matching with learned graph descriptors and optimal transport"};
  app.require_subcommand(1);
  Common common;
  app.add_option("--config", common.config_path, "JSON config file (missing keys keep defaults)");

  // gen
  auto* gen = app.add_subcommand("gen", "Generate a synthetic dataset manifest");
  int gen_count = 10;
  std::uint64_t gen_seed = 1;
  std::string gen_out = "data";
  gen->add_option("--count", gen_count, "Number of pairs to keep")->check(CLI::NonNegativeNumber);
  gen->add_option("--seed", gen_seed, "Master seed");
  gen->add_option("--out", gen_out, "Output directory (manifest.jsonl + images/)");

  // train
  auto* tr = app.add_subcommand("train", "Train a model on a manifest");
  std::string tr_manifest, tr_out = "run";
  std::optional<int> tr_epochs;
  std::optional<std::uint64_t> tr_seed;
  bool no_feature = false, no_topk = false, no_glpool = false;
  tr->add_option("--manifest", tr_manifest, "Training manifest")->required();
  tr->add_option("--out", tr_out, "Output directory for checkpoints and train_log.csv");
  tr->add_option("--epochs", tr_epochs, "Override train.epochs");
  tr->add_option("--seed", tr_seed, "Override train.seed");
  tr->add_flag("--no-feature-loss", no_feature, "Ablation: lambda = 0");
  tr->add_flag("--no-topk", no_topk, "Ablation: fixed full adjacency");
  tr->add_flag("--no-glpool", no_glpool, "Ablation: point-sampled descriptors");

  // match
  auto* mt = app.add_subcommand("match", "Match the lines of two images");
  std::string mt_a, mt_b, mt_la, mt_lb, mt_ck, mt_out = "matches.json", mt_overlay, mt_gt;
  mt->add_option("--image-a", mt_a)->required();
  mt->add_option("--image-b", mt_b)->required();
  mt->add_option("--lines-a", mt_la, "JSON array of [x0,y0,x1,y1]")->required();
  mt->add_option("--lines-b", mt_lb, "JSON array of [x0,y0,x1,y1]")->required();
  mt->add_option("--checkpoint", mt_ck)->required();
  mt->add_option("--out", mt_out, "Match set JSON");
  mt->add_option("--overlay", mt_overlay, "Optional overlay PNG");
  mt->add_option("--gt", mt_gt, "Optional ground truth JSON {\"pairs\": [[i, j], ...]}");

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint or a prediction file on a manifest");
  std::string ev_manifest, ev_ck, ev_pred, ev_out = "eval", ev_ablation;
  std::vector<std::string> ev_sweeps;
  std::vector<double> ev_values;
  ev->add_option("--manifest", ev_manifest)->required();
  ev->add_option("--checkpoint", ev_ck);
  ev->add_option("--predictions", ev_pred, "Match set JSON (single record) or {id: match set}");
  ev->add_option("--out", ev_out, "Output directory for metrics and plots");
  ev->add_option("--sweep", ev_sweeps, "rotation | blur | scale (repeatable)");
  ev->add_option("--sweep-values", ev_values, "Override the sweep axis values");
  ev->add_option("--ablation", ev_ablation, "Directory with <feature>-<topk>-<glpool>/model.ckpt variants");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return kUsage;
  }

  try {
    if (*gen) {
      const Config cfg = common.resolve();
      std::cout << "config hash " << config_hash(cfg) << "\n";
      GenerationSummary summary;
      auto records = generate_dataset(gen_count, gen_seed, cfg.data, cfg.filter, &summary);
      write_manifest(records, fs::path(gen_out) / "manifest.jsonl");
      std::cout << "attempted " << summary.attempted << ", kept " << summary.kept << ", discarded "
                << summary.discarded << "\n";
      return kOk;
    }

    if (*tr) {
      Config cfg = common.resolve();
      if (tr_epochs) cfg.train.epochs = *tr_epochs;
      if (tr_seed) cfg.train.seed = *tr_seed;
      if (no_feature) cfg.loss.lambda = 0.0;
      if (no_topk) cfg.graph.learned_adjacency = false;
      if (no_glpool) cfg.descriptor.point_sampling = true;
      cfg.validate();
      const auto records = open_manifest(tr_manifest);
      std::cout << "config hash " << config_hash(cfg) << "\n";
      write_json_file(fs::path(tr_out) / "config.json", config_to_json(cfg));
      TrainOptions opts;
      opts.out_dir = tr_out;
      opts.on_epoch = [](int epoch, double loss) { std::cout << "epoch " << epoch << " mean loss " << loss << "\n"; };
      try {
        train(records, cfg, opts);
      } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return kNumeric;
      }
      std::cout << "checkpoint " << (fs::path(tr_out) / "model.ckpt").string() << "\n";
      return kOk;
    }

    if (*mt) {
      const Checkpoint ck = open_checkpoint(mt_ck);
      std::cout << "config hash " << ck.config_hash << "\n";
      for (const auto& p : {mt_a, mt_b})
        if (!fs::exists(p)) throw ExitError(kMissing, "image not found: " + p);
      const cv::Mat a = read_png(mt_a), b = read_png(mt_b);
      const auto la = read_lines(mt_la), lb = read_lines(mt_lb);
      const MatchSet ms = match_images(a, b, la, lb, ck.model);
      write_json_file(mt_out, matchset_to_json(ms));
      std::optional<MatchGroundTruth> gt;
      if (!mt_gt.empty()) gt = read_gt(mt_gt, static_cast<int>(la.size()), static_cast<int>(lb.size()));
      if (!mt_overlay.empty()) {
        const Overlay ov = render_overlay(a, b, la, lb, ms, gt ? &*gt : nullptr);
        write_png(mt_overlay, ov.image);
      }
      std::cout << ms.matches.size() << " matches\n";
      if (gt) {
        const auto m = precision_recall_f(ms, *gt);
        std::cout << "precision " << m.precision << " recall " << m.recall << " f " << m.f_measure << "\n";
      }
      return kOk;
    }

    if (*ev) {
      const auto records = open_manifest(ev_manifest);
      fs::create_directories(ev_out);
      std::optional<Checkpoint> ck;
      if (!ev_ck.empty()) ck = open_checkpoint(ev_ck);
      if (!ck && ev_pred.empty() && ev_ablation.empty())
        throw ExitError(kUsage, "eval needs --checkpoint, --predictions or --ablation");
      json report = json::object();

      if (!ev_pred.empty()) {
        const json pj = read_json_file(ev_pred);
        std::vector<MatchMetrics> per;
        for (std::size_t k = 0; k < records.size(); ++k) {
          const json* entry = nullptr;
          if (pj.contains("matches")) {
            if (k == 0) entry = &pj;
          } else if (pj.contains(records[k].id)) {
            entry = &pj.at(records[k].id);
          }
          if (entry) per.push_back(precision_recall_f(matchset_from_json(*entry), records[k].gt));
        }
        report["predictions"] = metrics_to_json(aggregate(per));
      }

      if (ck) {
        std::cout << "config hash " << ck->config_hash << "\n";
        std::vector<MatchMetrics> per;
        std::ofstream csv(fs::path(ev_out) / "metrics.csv", std::ios::trunc);
        csv << metrics_csv_header() << "\n";
        for (const auto& r : records) {
          per.push_back(precision_recall_f(match_record(r, ck->model), r.gt));
          csv << metrics_csv_row(r.id, per.back()) << "\n";
        }
        const MatchMetrics agg = aggregate(per);
        csv << metrics_csv_row("all", agg) << "\n";
        report["metrics"] = metrics_to_json(agg);
        std::cout << "precision " << agg.precision << " recall " << agg.recall << " f " << agg.f_measure << "\n";

        const Model& model = ck->model;
        const Matcher matcher = [&](const ImagePairRecord& r) { return match_record(r, model); };
        json sweeps = json::array();
        for (const auto& name : ev_sweeps) {
          const auto axis = parse_axis(name);
          if (!axis) throw ExitError(kUsage, "unknown sweep axis '" + name + "'");
          const auto values = ev_values.empty() ? default_sweep_values(*axis) : ev_values;
          const SweepResult sr = robustness_sweep(matcher, records, *axis, values);
          write_sweep_csv(sr, fs::path(ev_out) / ("sweep_" + name + ".csv"));
          write_png(fs::path(ev_out) / ("sweep_" + name + ".png"), plot_sweep(sr));
          sweeps.push_back(sweep_to_json(sr));
          for (const auto& p : sr.points)
            std::cout << name << " " << p.value << ": "
                      << (p.defined ? std::to_string(p.metrics.precision) + " / " + std::to_string(p.metrics.recall)
                                    : std::string("undefined"))
                      << "\n";
        }
        if (!sweeps.empty()) report["sweeps"] = sweeps;
      }

      if (!ev_ablation.empty()) {
        std::map<std::string, Model> variants;
        auto lookup = [&](const AblationToggles& t) -> std::optional<Matcher> {
          const fs::path p = fs::path(ev_ablation) / dir_label(t) / "model.ckpt";
          if (!fs::exists(p)) return std::nullopt;
          auto [it, _] = variants.emplace(dir_label(t), load_checkpoint(p).model);
          const Model* m = &it->second;
          return Matcher([m](const ImagePairRecord& r) { return match_record(r, *m); });
        };
        auto rows = table_rows();
        for (const auto& t : single_off_rows())
          if (std::find(rows.begin(), rows.end(), t) == rows.end()) rows.push_back(t);
        const auto table = ablation_run(records, rows, lookup);
        write_ablation_csv(table, fs::path(ev_out) / "ablation.csv");
        json arr = json::array();
        for (const auto& r : table) {
          json e = {{"toggles", r.toggles.label()}};
          if (r.metrics) e["metrics"] = metrics_to_json(*r.metrics);
          if (!r.notice.empty()) {
            e["notice"] = r.notice;
            std::cout << r.notice << "\n";
          }
          arr.push_back(e);
        }
        report["ablation"] = arr;
      }
      write_json_file(fs::path(ev_out) / "metrics.json", report);
      return kOk;
    }
  } catch (const ExitError& e) {
    std::cerr << e.what() << "\n";
    return e.code;
  } catch (const ValidationError& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kUsage;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return kUsage;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kMissing;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kOk;
}
