#include "trinity/eval.hpp"

#include <charconv>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "trinity/image_io.hpp"

namespace trinity::eval {

namespace fs = std::filesystem;

namespace {

std::string fmt_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw DataError("bad number '" + s + "' in predictions log");
  }
  return v;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

}  // namespace

double ModelClassifier::score(const data::ManifestEntry&, const ImageTensor& image,
                              const encoders::CaptionRecord& caption) const {
  return fusion::predict(model_, image, caption).score;
}

NamedDataset load_named_dataset(const fs::path& manifest, const data::PreprocessConfig& pre) {
  const auto m = data::load_manifest(manifest);
  NamedDataset ds;
  ds.name = manifest.stem().string();
  ds.entries = m.entries;
  ds.items = train::load_dataset(m, pre);
  return ds;
}

std::string report_timestamp() {
  std::time_t t = 0;
  if (const char* sde = std::getenv("SOURCE_DATE_EPOCH"); sde != nullptr && *sde != '\0') {
    t = static_cast<std::time_t>(std::strtoll(sde, nullptr, 10));
  } else {
    t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  }
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

EvalReport evaluate(const Classifier& clf, const std::vector<NamedDataset>& datasets,
                    const std::vector<data::PerturbationSpec>& grid, unsigned threads) {
  if (grid.empty()) throw ConfigError("evaluate: perturbation grid is empty");
  for (const auto& g : grid) g.validate();

  EvalReport report;
  report.timestamp = report_timestamp();
  for (const auto& ds : datasets) {
    const std::size_t n = ds.items.size();
    std::vector<SamplePrediction> preds(n * grid.size());
    auto work = [&](std::size_t begin, std::size_t end) {
      for (std::size_t i = begin; i < end; ++i) {
        const auto& item = ds.items[i];
        for (std::size_t g = 0; g < grid.size(); ++g) {
          const ImageTensor img = data::perturb(item.image, grid[g]);
          SamplePrediction& p = preds[g * n + i];
          p.dataset = ds.name;
          p.column = grid[g].column_name();
          p.index = i;
          p.image_path = ds.entries[i].image_path;
          p.label = item.label;
          p.score = clf.score(ds.entries[i], img, item.caption);
          p.predicted = p.score >= clf.threshold() ? data::Label::Fake : data::Label::Real;
        }
      }
    };
    const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n)));
    if (workers <= 1) {
      work(0, n);
    } else {
      std::vector<std::jthread> pool;
      const std::size_t chunk = (n + workers - 1) / workers;
      for (unsigned w = 0; w < workers; ++w) {
        const std::size_t b = w * chunk;
        const std::size_t e = std::min(n, b + chunk);
        if (b < e) pool.emplace_back(work, b, e);
      }
    }

    DatasetRow row;
    row.dataset = ds.name;
    for (std::size_t g = 0; g < grid.size(); ++g) {
      CellResult cell;
      cell.column = grid[g].column_name();
      cell.spec = grid[g];
      cell.n_total = n;
      for (std::size_t i = 0; i < n; ++i) {
        const auto& p = preds[g * n + i];
        cell.n_correct += p.predicted == p.label;
      }
      cell.acc = n == 0 ? 0.0 : static_cast<double>(cell.n_correct) / static_cast<double>(n);
      row.cells.push_back(cell);
    }
    report.rows.push_back(std::move(row));
    report.predictions.insert(report.predictions.end(), std::make_move_iterator(preds.begin()),
                              std::make_move_iterator(preds.end()));
  }
  return report;
}

std::pair<std::size_t, std::size_t> recount(const std::vector<SamplePrediction>& preds,
                                            const std::string& dataset, const std::string& column) {
  std::size_t correct = 0, total = 0;
  for (const auto& p : preds) {
    if (p.dataset != dataset || p.column != column) continue;
    ++total;
    correct += p.predicted == p.label;
  }
  return {correct, total};
}

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& row : r.rows) {
    nlohmann::ordered_json cells = nlohmann::ordered_json::array();
    for (const auto& c : row.cells) {
      cells.push_back({{"column", c.column},
                       {"perturbation", c.spec.token()},
                       {"acc", c.acc},
                       {"n_correct", c.n_correct},
                       {"n_total", c.n_total}});
    }
    rows.push_back({{"dataset", row.dataset}, {"cells", cells}});
  }
  nlohmann::ordered_json j;
  j["kind"] = "eval";
  j["checkpoint"] = r.checkpoint;
  j["timestamp"] = r.timestamp;
  j["config"] = r.config;
  j["rows"] = rows;
  return j;
}

std::string to_csv(const EvalReport& r) {
  std::ostringstream os;
  os << "dataset";
  if (!r.rows.empty()) {
    for (const auto& c : r.rows.front().cells) os << ',' << c.column;
  }
  os << '\n';
  for (const auto& row : r.rows) {
    os << csv_field(row.dataset);
    for (const auto& c : row.cells) os << ',' << fmt_double(c.acc);
    os << '\n';
  }
  return os.str();
}

std::string predictions_csv(const std::vector<SamplePrediction>& preds) {
  std::ostringstream os;
  os << "dataset,column,index,image_path,label,score,predicted\n";
  for (const auto& p : preds) {
    os << csv_field(p.dataset) << ',' << csv_field(p.column) << ',' << p.index << ','
       << csv_field(p.image_path) << ',' << data::to_string(p.label) << ',' << fmt_double(p.score)
       << ',' << data::to_string(p.predicted) << '\n';
  }
  return os.str();
}

std::vector<SamplePrediction> parse_predictions_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);  // header
  std::vector<SamplePrediction> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 7) throw DataError("predictions log: expected 7 fields, got " + std::to_string(f.size()));
    SamplePrediction p;
    p.dataset = f[0];
    p.column = f[1];
    p.index = static_cast<std::size_t>(std::stoull(f[2]));
    p.image_path = f[3];
    const auto label = data::label_from_string(f[4]);
    const auto predicted = data::label_from_string(f[6]);
    if (!label || !predicted) throw DataError("predictions log: bad label");
    p.label = *label;
    p.score = parse_double(f[5]);
    p.predicted = *predicted;
    out.push_back(std::move(p));
  }
  return out;
}

void write_report(const EvalReport& r, const fs::path& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create '" + out_dir.string() + "': " + ec.message());
  write_text(out_dir / "report.json", to_json(r).dump(2) + "\n");
  write_text(out_dir / "report.csv", to_csv(r));
  write_text(out_dir / "predictions.csv", predictions_csv(r.predictions));
}

// --- ablation -----------------------------------------------------------------

AblationPlan AblationPlan::standard() {
  return from_names({"full", "freq_ablated", "caption_ablated", "caption_generated"});
}

AblationPlan AblationPlan::from_names(const std::vector<std::string>& names) {
  AblationPlan plan;
  for (const auto& n : names) {
    fusion::AblationFlags f;
    if (n == "full") {
    } else if (n == "freq_ablated") {
      f.disable_frequency = true;
    } else if (n == "caption_ablated") {
      f.disable_caption = true;
    } else if (n == "caption_generated") {
      f.caption_generated = true;
    } else {
      throw ConfigError("unknown ablation configuration '" + n + "'");
    }
    plan.configs.emplace_back(n, f);
  }
  plan.validate();
  return plan;
}

void AblationPlan::validate() const {
  if (configs.empty()) throw ConfigError("ablation plan is empty");
  std::set<std::string> seen;
  for (const auto& [name, flags] : configs) {
    if (!seen.insert(name).second) throw ConfigError("duplicate ablation configuration '" + name + "'");
  }
}

AblationReport run_ablation(const std::vector<train::LabeledImage>& train_set,
                            const std::vector<NamedDataset>& eval_sets,
                            const fusion::DetectorConfig& detector, const train::TrainConfig& tc,
                            const AblationPlan& plan,
                            const std::function<void(const std::string&)>& log) {
  plan.validate();
  AblationReport report;
  report.timestamp = report_timestamp();
  nlohmann::json plan_json = nlohmann::json::array();
  for (const auto& [name, flags] : plan.configs) plan_json.push_back(name);
  report.config = {{"detector", fusion::to_json(detector)},
                   {"train", train::to_json(tc)},
                   {"plan", plan_json}};

  for (const auto& [name, flags] : plan.configs) {
    if (log) log("training configuration '" + name + "'");
    train::TrainConfig run_cfg = tc;
    run_cfg.ablation = flags;
    const auto result = train::train(train_set, detector, run_cfg);
    report.final_probe_losses.push_back(result.final_probe_loss);
    const ModelClassifier clf(result.model);
    const auto er = evaluate(clf, eval_sets, {data::PerturbationSpec::none()});
    for (const auto& row : er.rows) {
      const auto& cell = row.cells.front();
      report.rows.push_back({name, row.dataset, cell.n_correct, cell.n_total, cell.acc});
      if (log) log("  " + row.dataset + ": ACC " + fmt_double(cell.acc));
    }
    for (auto p : er.predictions) {
      p.column = name;
      report.predictions.push_back(std::move(p));
    }
  }
  return report;
}

nlohmann::json to_json(const AblationReport& r) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"config", row.config},
                    {"dataset", row.dataset},
                    {"acc", row.acc},
                    {"n_correct", row.n_correct},
                    {"n_total", row.n_total}});
  }
  nlohmann::ordered_json j;
  j["kind"] = "ablation";
  j["timestamp"] = r.timestamp;
  j["config"] = r.config;
  j["final_probe_losses"] = r.final_probe_losses;
  j["rows"] = rows;
  return j;
}

std::string to_csv(const AblationReport& r) {
  std::ostringstream os;
  os << "config,dataset,ACC,n_correct,n_total\n";
  for (const auto& row : r.rows) {
    os << csv_field(row.config) << ',' << csv_field(row.dataset) << ',' << fmt_double(row.acc)
       << ',' << row.n_correct << ',' << row.n_total << '\n';
  }
  return os.str();
}

void write_report(const AblationReport& r, const fs::path& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create '" + out_dir.string() + "': " + ec.message());
  write_text(out_dir / "report.json", to_json(r).dump(2) + "\n");
  write_text(out_dir / "report.csv", to_csv(r));
  write_text(out_dir / "predictions.csv", predictions_csv(r.predictions));
}

}  // namespace trinity::eval
