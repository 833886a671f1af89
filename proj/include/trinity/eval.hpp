#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"

#include "trinity/data.hpp"
#include "trinity/fusion.hpp"
#include "trinity/train.hpp"

namespace trinity::eval {

/// Anything that assigns a fake-probability score to a sample.
class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual double score(const data::ManifestEntry& entry, const ImageTensor& image,
                       const encoders::CaptionRecord& caption) const = 0;
  virtual double threshold() const { return 0.5; }
};

class ModelClassifier : public Classifier {
 public:
  explicit ModelClassifier(const fusion::DetectorModel& model) : model_(model) {}
  double score(const data::ManifestEntry& entry, const ImageTensor& image,
               const encoders::CaptionRecord& caption) const override;
  double threshold() const override { return model_.config.threshold; }

 private:
  const fusion::DetectorModel& model_;
};

struct NamedDataset {
  std::string name;
  std::vector<data::ManifestEntry> entries;
  std::vector<train::LabeledImage> items;
};

/// Loads a manifest and its images. The dataset name is the manifest stem.
NamedDataset load_named_dataset(const std::filesystem::path& manifest,
                                const data::PreprocessConfig& pre);

struct SamplePrediction {
  std::string dataset;
  std::string column;
  std::size_t index = 0;
  std::string image_path;
  data::Label label = data::Label::Real;
  double score = 0.0;
  data::Label predicted = data::Label::Real;
};

struct CellResult {
  std::string column;
  data::PerturbationSpec spec;
  std::size_t n_correct = 0;
  std::size_t n_total = 0;
  double acc = 0.0;
};

struct DatasetRow {
  std::string dataset;
  std::vector<CellResult> cells;
};

struct EvalReport {
  std::vector<DatasetRow> rows;
  std::string checkpoint;
  nlohmann::json config;
  std::string timestamp;
  std::vector<SamplePrediction> predictions;
};

/// ISO-8601 UTC time; honours SOURCE_DATE_EPOCH so reruns can be byte-identical.
std::string report_timestamp();

/// Scores every sample under every perturbation in `grid`. Samples are
/// distributed over `threads` workers; output order is independent of it.
EvalReport evaluate(const Classifier& clf, const std::vector<NamedDataset>& datasets,
                    const std::vector<data::PerturbationSpec>& grid, unsigned threads = 1);

/// (n_correct, n_total) for one dataset/column, recomputed from predictions.
std::pair<std::size_t, std::size_t> recount(const std::vector<SamplePrediction>& preds,
                                            const std::string& dataset, const std::string& column);

nlohmann::json to_json(const EvalReport& r);
/// Header: dataset, then one column per grid entry (Ori, JPEG80, ...).
std::string to_csv(const EvalReport& r);
std::string predictions_csv(const std::vector<SamplePrediction>& preds);
std::vector<SamplePrediction> parse_predictions_csv(const std::string& text);

/// Writes report.json, report.csv and predictions.csv into `out_dir`.
void write_report(const EvalReport& r, const std::filesystem::path& out_dir);

// --- ablation -----------------------------------------------------------------

struct AblationPlan {
  std::vector<std::pair<std::string, fusion::AblationFlags>> configs;

  /// full, freq_ablated, caption_ablated, caption_generated.
  static AblationPlan standard();
  /// Subset/reordering of the standard names. Throws ConfigError on unknown
  /// or duplicate names.
  static AblationPlan from_names(const std::vector<std::string>& names);
  void validate() const;
};

struct AblationRow {
  std::string config;
  std::string dataset;
  std::size_t n_correct = 0;
  std::size_t n_total = 0;
  double acc = 0.0;
};

struct AblationReport {
  std::vector<AblationRow> rows;
  nlohmann::json config;
  std::string timestamp;
  std::vector<SamplePrediction> predictions;  // column = config name
  std::vector<double> final_probe_losses;     // one per plan entry
};

/// Trains one model per plan entry with the shared seed in `tc` and evaluates
/// each on clean versions of `eval_sets`.
AblationReport run_ablation(const std::vector<train::LabeledImage>& train_set,
                            const std::vector<NamedDataset>& eval_sets,
                            const fusion::DetectorConfig& detector, const train::TrainConfig& tc,
                            const AblationPlan& plan,
                            const std::function<void(const std::string&)>& log = {});

nlohmann::json to_json(const AblationReport& r);
std::string to_csv(const AblationReport& r);
void write_report(const AblationReport& r, const std::filesystem::path& out_dir);

}  // namespace trinity::eval
