#include "linematch/trainer.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <numeric>

#include "linematch/descriptor.hpp"
#include "linematch/errors.hpp"
#include "linematch/graphnet.hpp"
#include "linematch/losses.hpp"
#include "linematch/transport.hpp"

namespace linematch {

BoundModel bind(ad::Tape& tape, const Model& model, bool trainable) {
  auto b = [&](const Parameter& p) { return trainable ? tape.parameter(p) : tape.constant(p.value); };
  BoundModel out;
  for (const auto& k : model.backbone.kernels) out.kernels.push_back(b(k));
  for (const auto& k : model.backbone.biases) out.biases.push_back(b(k));
  out.dustbin = b(model.dustbin);
  for (const auto& l : model.layers)
    out.layers.push_back({b(l.omega), b(l.a_vec), b(l.theta1), b(l.theta2), b(l.w_cross)});
  out.affinity_weight = b(model.affinity_weight);
  return out;
}

namespace {

std::vector<int> all_indices(std::size_t n) {
  std::vector<int> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

MatchGroundTruth relabel(const MatchGroundTruth& gt, const std::vector<int>& kept_a, const std::vector<int>& kept_b,
                         int n_a, int n_b) {
  std::vector<int> ma(static_cast<std::size_t>(n_a), -1), mb(static_cast<std::size_t>(n_b), -1);
  for (std::size_t k = 0; k < kept_a.size(); ++k) ma[kept_a[k]] = static_cast<int>(k);
  for (std::size_t k = 0; k < kept_b.size(); ++k) mb[kept_b[k]] = static_cast<int>(k);
  std::vector<std::pair<int, int>> pairs;
  for (const auto& [i, j] : gt.pairs)
    if (ma[i] >= 0 && mb[j] >= 0) pairs.emplace_back(ma[i], mb[j]);
  return MatchGroundTruth::from_pairs(std::move(pairs), static_cast<int>(kept_a.size()),
                                      static_cast<int>(kept_b.size()));
}

}  // namespace

ForwardResult forward_pipeline(ad::Tape& tape, const BoundModel& bound, const Config& config,
                               const ImageTensor& image_a, const ImageTensor& image_b,
                               std::span<const LineSegment> lines_a, std::span<const LineSegment> lines_b,
                               const MatchGroundTruth* gt, Diagnostics* diag) {
  ForwardResult res;
  if (gt) gt->validate(static_cast<int>(lines_a.size()), static_cast<int>(lines_b.size()));
  if (lines_a.empty() || lines_b.empty()) {
    res.skipped = true;
    return res;
  }
  const MultiScaleFeatureVars maps_a =
      extract_feature_maps(tape, image_a, config.backbone, bound.kernels, bound.biases);
  const MultiScaleFeatureVars maps_b =
      extract_feature_maps(tape, image_b, config.backbone, bound.kernels, bound.biases);
  const LineDescriptors da = describe_lines(maps_a, lines_a, config.descriptor);
  const LineDescriptors db = describe_lines(maps_b, lines_b, config.descriptor);

  if (config.match.exclusion) {
    std::tie(res.kept_a, res.kept_b) =
        exclude_non_matches(da.combined.value(), db.combined.value(), config.match.exclusion_threshold);
  } else {
    res.kept_a = all_indices(lines_a.size());
    res.kept_b = all_indices(lines_b.size());
  }
  if (res.kept_a.empty() && res.kept_b.empty()) {
    res.skipped = true;
    return res;
  }
  const int n = static_cast<int>(res.kept_a.size()), m = static_cast<int>(res.kept_b.size());

  ad::Var fa = append_dustbin(ad::gather_rows(da.combined, res.kept_a), bound.dustbin);
  ad::Var fb = append_dustbin(ad::gather_rows(db.combined, res.kept_b), bound.dustbin);

  for (std::size_t l = 0; l < bound.layers.size(); ++l) {
    const auto& p = bound.layers[l];
    const double k = layer_keep_ratio(static_cast<int>(l) + 1);
    ad::Var adj_a, adj_b;
    if (config.graph.learned_adjacency) {
      adj_a = mutual_topk_adjacency(relation_scores(fa, p.a_vec, p.omega), k, n, config.graph.strict_mutual, diag)
                  .adjacency;
      adj_b = mutual_topk_adjacency(relation_scores(fb, p.a_vec, p.omega), k, m, config.graph.strict_mutual, diag)
                  .adjacency;
    } else {
      adj_a = tape.constant(full_adjacency(n));
      adj_b = tape.constant(full_adjacency(m));
    }
    fa = intra_conv(adj_a, fa, p.theta1, p.theta2);
    fb = intra_conv(adj_b, fb, p.theta1, p.theta2);
    TransportSolution sol =
        solve_matching(fa, fb, bound.affinity_weight, config.match.delta, config.match.sinkhorn);
    res.layers.push_back({adj_a.value(), adj_b.value(), sol.sinkhorn.plan});
    std::tie(fa, fb) = cross_conv(fa, fb, ad::exp(sol.sinkhorn.log_plan), p.w_cross);
  }

  TransportSolution final_sol =
      solve_matching(fa, fb, bound.affinity_weight, config.match.delta, config.match.sinkhorn);
  res.log_plan = final_sol.sinkhorn.log_plan;
  res.plan = final_sol.sinkhorn.plan;
  res.converged = final_sol.sinkhorn.converged;
  if (!gt) return res;

  res.gt_kept = relabel(*gt, res.kept_a, res.kept_b, static_cast<int>(lines_a.size()),
                        static_cast<int>(lines_b.size()));
  const double lambda = config.loss.lambda;
  if (lambda > 0.0)
    res.feature_loss = feature_learning_loss(da.shallow, db.shallow, da.deep, db.deep, gt->pairs, config.loss, diag);
  else
    res.feature_loss = tape.constant(Matrix::Zero(1, 1));
  res.graph_loss = matching_loss_from_log(res.log_plan, res.gt_kept);
  res.total_loss = total_loss(res.feature_loss, res.graph_loss, lambda);
  res.feature = res.feature_loss.scalar();
  res.graph = res.graph_loss.scalar();
  res.total = res.total_loss.scalar();
  return res;
}

ForwardResult forward_pipeline(ad::Tape& tape, const Model& model, const ImagePairRecord& record, bool trainable,
                               Diagnostics* diag) {
  const BoundModel bound = bind(tape, model, trainable);
  const ImageTensor ta = to_tensor(record.image_a), tb = to_tensor(record.image_b);
  return forward_pipeline(tape, bound, model.config, ta, tb, record.lines_a, record.lines_b, &record.gt, diag);
}

double learning_rate_at(const TrainConfig& config, int epoch) {
  if (epoch < 1) throw ValidationError("epoch index must be >= 1");
  return std::max(config.learning_rate / std::pow(config.lr_decay_factor, epoch - 1), config.lr_floor);
}

void adam_step(Model& model, AdamState& state, const std::map<std::string, Matrix>& grads, double lr,
               const TrainConfig& config) {
  ++state.step;
  const double b1 = config.adam_beta1, b2 = config.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (Parameter* p : model.parameters()) {
    auto g = grads.find(p->name);
    if (g == grads.end()) continue;
    auto [it, inserted] = state.moments.try_emplace(
        p->name, Matrix::Zero(p->value.rows(), p->value.cols()), Matrix::Zero(p->value.rows(), p->value.cols()));
    Matrix& m1 = it->second.first;
    Matrix& m2 = it->second.second;
    m1 = b1 * m1 + (1.0 - b1) * g->second;
    m2 = b2 * m2 + (1.0 - b2) * g->second.cwiseAbs2();
    p->value.array() -= lr * (m1.array() / c1) / ((m2.array() / c2).sqrt() + config.adam_eps);
  }
}

ImagePairRecord augment_record(const ImagePairRecord& record, std::mt19937_64& rng, const TrainConfig& config) {
  auto draw = [&](const cv::Mat& img) {
    const double deg =
        std::uniform_real_distribution<double>(-config.augment_rotation_deg, config.augment_rotation_deg)(rng);
    const double s = std::uniform_real_distribution<double>(config.augment_scale_min, config.augment_scale_max)(rng);
    return similarity_about((img.cols - 1) / 2.0, (img.rows - 1) / 2.0, deg, s);
  };
  const Homography ha = draw(record.image_a);
  const Homography hb = draw(record.image_b);
  return warp_record(record, ha, hb, record.image_a.size(), record.image_b.size());
}

Checkpoint train(std::span<const ImagePairRecord> dataset, const Config& config, const TrainOptions& options,
                 TrainStats* stats, const Checkpoint* resume) {
  if (dataset.empty()) throw ValidationError("train: empty dataset");
  config.validate();
  Checkpoint ck;
  if (resume) {
    ck = *resume;
  } else {
    ck.model = Model::init(config, config.train.seed);
  }
  ck.model.config = config;
  ck.config_hash = config_hash(config);
  TrainStats local;
  TrainStats& st = stats ? *stats : local;

  std::ofstream log;
  if (!options.out_dir.empty()) {
    std::filesystem::create_directories(options.out_dir);
    log.open(options.out_dir / "train_log.csv", std::ios::trunc);
    if (!log) throw IoError("cannot write " + (options.out_dir / "train_log.csv").string());
    const std::time_t now = std::time(nullptr);
    log << "# config_hash=" << ck.config_hash << " started=" << std::put_time(std::gmtime(&now), "%Y-%m-%dT%H:%M:%SZ")
        << "\n";
    log << "epoch,step,lr,loss,feature,graph,records\n";
  }

  std::mt19937_64 rng(config.train.seed ^ 0x5eedULL);
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t batch = static_cast<std::size_t>(config.train.batch_size);

  for (int epoch = ck.epoch + 1; epoch <= config.train.epochs; ++epoch) {
    const double lr = learning_rate_at(config.train, epoch);
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_sum = 0.0;
    int epoch_records = 0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      std::map<std::string, Matrix> grads;
      StepLog sl;
      sl.epoch = epoch;
      sl.lr = lr;
      for (std::size_t t = start; t < std::min(start + batch, order.size()); ++t) {
        const ImagePairRecord& base = dataset[order[t]];
        const ImagePairRecord rec = config.train.augment ? augment_record(base, rng, config.train) : base;
        ad::Tape tape;
        ForwardResult fr = forward_pipeline(tape, ck.model, rec, true);
        if (fr.skipped) {
          ++st.skipped_records;
          continue;
        }
        if (!std::isfinite(fr.total))
          throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", record " + base.id);
        tape.backward(fr.total_loss);
        for (auto& [p, g] : tape.parameter_grads()) {
          auto [it, inserted] = grads.try_emplace(p->name, g);
          if (!inserted) it->second += g;
        }
        sl.loss += fr.total;
        sl.feature += fr.feature;
        sl.graph += fr.graph;
        ++sl.records;
      }
      if (sl.records == 0) continue;
      for (auto& [name, g] : grads) g /= sl.records;
      adam_step(ck.model, ck.optimizer, grads, lr, config.train);
      for (const Parameter* p : ck.model.parameters())
        if (!p->value.allFinite()) throw NumericError("parameter " + p->name + " became non-finite");
      epoch_sum += sl.loss;
      epoch_records += sl.records;
      sl.loss /= sl.records;
      sl.feature /= sl.records;
      sl.graph /= sl.records;
      sl.step = static_cast<int>(st.steps.size()) + 1;
      st.steps.push_back(sl);
      if (log) log << sl.epoch << ',' << sl.step << ',' << sl.lr << ',' << sl.loss << ',' << sl.feature << ','
                   << sl.graph << ',' << sl.records << '\n';
      if (options.on_step) options.on_step(sl);
    }
    const double mean = epoch_records ? epoch_sum / epoch_records : 0.0;
    st.epoch_loss.push_back(mean);
    ck.epoch = epoch;
    if (!options.out_dir.empty()) {
      char name[32];
      std::snprintf(name, sizeof(name), "epoch_%02d.ckpt", epoch);
      save_checkpoint(ck, options.out_dir / name);
      save_checkpoint(ck, options.out_dir / "model.ckpt");
      log.flush();
    }
    if (options.on_epoch) options.on_epoch(epoch, mean);
  }
  return ck;
}

MatchSet match_images(const cv::Mat& image_a, const cv::Mat& image_b, std::span<const LineSegment> lines_a,
                      std::span<const LineSegment> lines_b, const Model& model) {
  MatchSet out;
  auto all_unmatched = [&] {
    out.matches.clear();
    out.unmatched_a = all_indices(lines_a.size());
    out.unmatched_b = all_indices(lines_b.size());
    return out;
  };
  if (lines_a.empty() || lines_b.empty()) return all_unmatched();
  ad::Tape tape;
  const BoundModel bound = bind(tape, model, false);
  const ForwardResult fr = forward_pipeline(tape, bound, model.config, to_tensor(image_a), to_tensor(image_b),
                                            lines_a, lines_b, nullptr);
  if (fr.skipped) return all_unmatched();
  const MatchSet kept = extract_matches(fr.plan, model.config.match.score_floor);
  std::vector<char> used_a(lines_a.size(), 0), used_b(lines_b.size(), 0);
  for (const Match& mt : kept.matches) {
    const int a = fr.kept_a[mt.a], b = fr.kept_b[mt.b];
    out.matches.push_back({a, b, mt.score});
    used_a[a] = used_b[b] = 1;
  }
  for (std::size_t i = 0; i < lines_a.size(); ++i)
    if (!used_a[i]) out.unmatched_a.push_back(static_cast<int>(i));
  for (std::size_t j = 0; j < lines_b.size(); ++j)
    if (!used_b[j]) out.unmatched_b.push_back(static_cast<int>(j));
  return out;
}

MatchSet match_record(const ImagePairRecord& record, const Model& model) {
  return match_images(record.image_a, record.image_b, record.lines_a, record.lines_b, model);
}

}  // namespace linematch
