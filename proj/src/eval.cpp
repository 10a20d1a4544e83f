#include "linematch/eval.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <opencv2/imgproc.hpp>

#include "linematch/errors.hpp"

using nlohmann::json;

namespace linematch {

double f_measure(double precision, double recall) {
  const double s = precision + recall;
  return s > 0.0 ? 2.0 * precision * recall / s : 0.0;
}

namespace {

MatchMetrics from_counts(int tp, int predicted, int gt) {
  MatchMetrics m;
  m.true_positives = tp;
  m.predicted = predicted;
  m.ground_truth = gt;
  m.precision_undefined = predicted == 0;
  m.recall_undefined = gt == 0;
  m.precision = predicted ? 100.0 * tp / predicted : 0.0;
  m.recall = gt ? 100.0 * tp / gt : 0.0;
  m.f_measure = f_measure(m.precision, m.recall);
  return m;
}

}  // namespace

MatchMetrics precision_recall_f(const MatchSet& predicted, const MatchGroundTruth& gt) {
  const std::set<std::pair<int, int>> truth(gt.pairs.begin(), gt.pairs.end());
  int tp = 0;
  for (const Match& m : predicted.matches) tp += truth.count({m.a, m.b}) ? 1 : 0;
  return from_counts(tp, static_cast<int>(predicted.matches.size()), static_cast<int>(truth.size()));
}

MatchMetrics aggregate(std::span<const MatchMetrics> per_pair) {
  int tp = 0, pred = 0, gt = 0;
  for (const auto& m : per_pair) {
    if (m.recall_undefined) continue;
    tp += m.true_positives;
    pred += m.predicted;
    gt += m.ground_truth;
  }
  return from_counts(tp, pred, gt);
}

std::string axis_name(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::Rotation: return "rotation";
    case SweepAxis::Blur: return "blur";
    case SweepAxis::Scale: return "scale";
  }
  return "unknown";
}

std::optional<SweepAxis> parse_axis(const std::string& name) {
  if (name == "rotation") return SweepAxis::Rotation;
  if (name == "blur") return SweepAxis::Blur;
  if (name == "scale") return SweepAxis::Scale;
  return std::nullopt;
}

std::vector<double> default_sweep_values(SweepAxis axis) {
  std::vector<double> v;
  switch (axis) {
    case SweepAxis::Rotation:
      for (int k = 0; k <= 6; ++k) v.push_back(15.0 * k);
      break;
    case SweepAxis::Blur:
      for (int k = 1; k <= 6; ++k) v.push_back(0.5 * k);
      break;
    case SweepAxis::Scale:
      for (int k = 4; k <= 10; ++k) v.push_back(k / 10.0);
      break;
  }
  return v;
}

ImagePairRecord transform_record(const ImagePairRecord& record, SweepAxis axis, double value) {
  const cv::Size sa = record.image_a.size(), sb = record.image_b.size();
  switch (axis) {
    case SweepAxis::Rotation: {
      const Homography ha = similarity_about((sa.width - 1) / 2.0, (sa.height - 1) / 2.0, value / 2.0, 1.0);
      const Homography hb = similarity_about((sb.width - 1) / 2.0, (sb.height - 1) / 2.0, -value / 2.0, 1.0);
      return warp_record(record, ha, hb, sa, sb);
    }
    case SweepAxis::Blur: {
      if (value < 0.0) throw ValidationError("blur sigma must be >= 0");
      ImagePairRecord out = record;
      if (value > 0.0) {
        cv::GaussianBlur(record.image_a, out.image_a, cv::Size(0, 0), value, value, cv::BORDER_REFLECT);
        cv::GaussianBlur(record.image_b, out.image_b, cv::Size(0, 0), value, value, cv::BORDER_REFLECT);
      }
      return out;
    }
    case SweepAxis::Scale: {
      if (!(value > 0.0)) throw ValidationError("scale must be positive");
      Homography h = Homography::Identity();
      h(0, 0) = h(1, 1) = value;
      auto scaled = [&](cv::Size s) {
        return cv::Size(static_cast<int>(std::ceil((s.width - 1) * value - 1e-9)) + 1,
                        static_cast<int>(std::ceil((s.height - 1) * value - 1e-9)) + 1);
      };
      return warp_record(record, h, h, scaled(sa), scaled(sb));
    }
  }
  return record;
}

SweepResult robustness_sweep(const Matcher& matcher, std::span<const ImagePairRecord> records, SweepAxis axis,
                             const std::vector<double>& values) {
  for (std::size_t k = 1; k < values.size(); ++k)
    if (!(values[k] > values[k - 1])) throw ValidationError("sweep values must be strictly increasing");
  SweepResult res;
  res.axis = axis;
  for (double v : values) {
    std::vector<MatchMetrics> per;
    for (const auto& rec : records) {
      const ImagePairRecord t = transform_record(rec, axis, v);
      if (t.gt.pairs.empty()) continue;
      per.push_back(precision_recall_f(matcher(t), t.gt));
    }
    SweepPoint p;
    p.value = v;
    p.defined = !per.empty();
    if (p.defined) p.metrics = aggregate(per);
    res.points.push_back(p);
  }
  return res;
}

std::string AblationToggles::label() const {
  auto s = [](bool b) { return b ? "on" : "off"; };
  return std::string(s(feature_loss)) + "/" + s(topk_graph) + "/" + s(glpooling);
}

std::vector<AblationToggles> table_rows() {
  return {{true, true, true}, {true, true, false}, {true, false, false}, {false, false, false}};
}

std::vector<AblationToggles> single_off_rows() {
  return {{true, true, true}, {false, true, true}, {true, false, true}, {true, true, false}};
}

std::vector<AblationRow> ablation_run(std::span<const ImagePairRecord> dataset,
                                      const std::vector<AblationToggles>& rows,
                                      const std::function<std::optional<Matcher>(const AblationToggles&)>& variant) {
  std::vector<AblationRow> out;
  for (const auto& t : rows) {
    AblationRow row;
    row.toggles = t;
    const auto matcher = variant(t);
    if (!matcher) {
      row.notice = "no trained variant for " + t.label() + ", row skipped";
      out.push_back(row);
      continue;
    }
    std::vector<MatchMetrics> per;
    for (const auto& rec : dataset) per.push_back(precision_recall_f((*matcher)(rec), rec.gt));
    row.metrics = aggregate(per);
    out.push_back(row);
  }
  return out;
}

json metrics_to_json(const MatchMetrics& m) {
  return {{"precision", m.precision},
          {"recall", m.recall},
          {"f_measure", m.f_measure},
          {"true_positives", m.true_positives},
          {"predicted", m.predicted},
          {"ground_truth", m.ground_truth},
          {"precision_undefined", m.precision_undefined},
          {"recall_undefined", m.recall_undefined}};
}

std::string metrics_csv_header() { return "label,precision,recall,f_measure,true_positives,predicted,ground_truth"; }

std::string metrics_csv_row(const std::string& label, const MatchMetrics& m) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(4);
  os << label << ',' << m.precision << ',' << m.recall << ',' << m.f_measure << ',' << m.true_positives << ','
     << m.predicted << ',' << m.ground_truth;
  return os.str();
}

json sweep_to_json(const SweepResult& sweep) {
  json pts = json::array();
  for (const auto& p : sweep.points) {
    json e = {{"value", p.value}, {"defined", p.defined}};
    if (p.defined) e["metrics"] = metrics_to_json(p.metrics);
    pts.push_back(e);
  }
  return {{"axis", axis_name(sweep.axis)}, {"points", pts}};
}

void write_sweep_csv(const SweepResult& sweep, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "axis,value,defined,precision,recall,f_measure\n";
  for (const auto& p : sweep.points)
    out << axis_name(sweep.axis) << ',' << p.value << ',' << (p.defined ? 1 : 0) << ',' << p.metrics.precision << ','
        << p.metrics.recall << ',' << p.metrics.f_measure << '\n';
}

void write_ablation_csv(const std::vector<AblationRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "feature_loss,topk_graph,glpooling,precision,recall,f_measure,notice\n";
  for (const auto& r : rows) {
    out << r.toggles.feature_loss << ',' << r.toggles.topk_graph << ',' << r.toggles.glpooling << ',';
    if (r.metrics)
      out << r.metrics->precision << ',' << r.metrics->recall << ',' << r.metrics->f_measure << ',';
    else
      out << ",,,";
    out << r.notice << '\n';
  }
}

json matchset_to_json(const MatchSet& m) {
  json matches = json::array();
  for (const auto& x : m.matches) matches.push_back({{"a", x.a}, {"b", x.b}, {"score", x.score}});
  return {{"matches", matches}, {"unmatched_a", m.unmatched_a}, {"unmatched_b", m.unmatched_b}};
}

MatchSet matchset_from_json(const json& j) {
  MatchSet m;
  try {
    for (const auto& x : j.at("matches")) m.matches.push_back({x.at("a").get<int>(), x.at("b").get<int>(),
                                                                x.at("score").get<double>()});
    m.unmatched_a = j.at("unmatched_a").get<std::vector<int>>();
    m.unmatched_b = j.at("unmatched_b").get<std::vector<int>>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad match file: ") + e.what(), 0);
  }
  return m;
}

}  // namespace linematch
