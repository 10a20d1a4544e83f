#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "linematch/datagen.hpp"
#include "linematch/types.hpp"

namespace linematch {

/// Percentages in [0, 100]. A prediction counts only on exact index-pair equality.
struct MatchMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f_measure = 0.0;
  int true_positives = 0;
  int predicted = 0;
  int ground_truth = 0;
  bool precision_undefined = false;  // nothing predicted; precision reported as 0
  bool recall_undefined = false;     // no ground-truth matches
};

/// 2PR / (P + R), 0 when P + R = 0.
double f_measure(double precision, double recall);

MatchMetrics precision_recall_f(const MatchSet& predicted, const MatchGroundTruth& gt);

/// Micro-average: pools the counts. Entries with an undefined recall are left out.
MatchMetrics aggregate(std::span<const MatchMetrics> per_pair);

enum class SweepAxis { Rotation, Blur, Scale };

std::string axis_name(SweepAxis axis);
std::optional<SweepAxis> parse_axis(const std::string& name);

/// Relative rotation 0..90 deg in steps of 15; blur sigma 0.5..3 in steps of 0.5;
/// scale 0.4..1 in steps of 0.1.
std::vector<double> default_sweep_values(SweepAxis axis);

/// Rotation: A by +v/2 and B by -v/2 about their centres. Blur: Gaussian of sigma v
/// on both images (v = 0 leaves them unchanged). Scale: both images resized by v with
/// endpoints multiplied by v exactly. Ground truth follows the surviving lines.
ImagePairRecord transform_record(const ImagePairRecord& record, SweepAxis axis, double value);

struct SweepPoint {
  double value = 0.0;
  MatchMetrics metrics;
  bool defined = true;  // false when the transform leaves no ground-truth match
};

struct SweepResult {
  SweepAxis axis = SweepAxis::Rotation;
  std::vector<SweepPoint> points;
};

using Matcher = std::function<MatchSet(const ImagePairRecord&)>;

/// Evaluates `matcher` on the transformed records at each value (values must be
/// strictly increasing); metrics are micro-averaged over `records`.
SweepResult robustness_sweep(const Matcher& matcher, std::span<const ImagePairRecord> records, SweepAxis axis,
                             const std::vector<double>& values);

struct AblationToggles {
  bool feature_loss = true;
  bool topk_graph = true;
  bool glpooling = true;
  std::string label() const;  // e.g. "on/on/off"
  bool operator==(const AblationToggles&) const = default;
};

/// The four rows of the component table, top to bottom: all on; GLpooling off;
/// GLpooling and graph learning off; all off.
std::vector<AblationToggles> table_rows();
/// All on followed by each single component switched off.
std::vector<AblationToggles> single_off_rows();

struct AblationRow {
  AblationToggles toggles;
  std::optional<MatchMetrics> metrics;
  std::string notice;
};

/// Looks up a trained matcher for each toggle set; missing variants yield a row
/// without metrics and a notice.
std::vector<AblationRow> ablation_run(std::span<const ImagePairRecord> dataset,
                                      const std::vector<AblationToggles>& rows,
                                      const std::function<std::optional<Matcher>(const AblationToggles&)>& variant);

nlohmann::json metrics_to_json(const MatchMetrics& m);
std::string metrics_csv_header();
std::string metrics_csv_row(const std::string& label, const MatchMetrics& m);

nlohmann::json sweep_to_json(const SweepResult& sweep);
void write_sweep_csv(const SweepResult& sweep, const std::filesystem::path& path);
void write_ablation_csv(const std::vector<AblationRow>& rows, const std::filesystem::path& path);

/// MatchSet file format shared by `match` and `eval`.
nlohmann::json matchset_to_json(const MatchSet& m);
MatchSet matchset_from_json(const nlohmann::json& j);

}  // namespace linematch
