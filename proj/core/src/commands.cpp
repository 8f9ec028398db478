#include "cfrg/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

namespace cfrg::commands {

namespace fs = std::filesystem;

namespace {

bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](char c) { return (char)std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp";
}

std::vector<fs::path> collect_images(const fs::path& root) {
  std::vector<fs::path> out;
  if (!fs::exists(root)) throw DataError("input directory does not exist: " + root.string());
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file() && is_image_file(e.path())) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

void write_raw_f32(const fs::path& path, const Map2D& map) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path.string());
  for (real v : map.data) {
    const float fv = (float)v;
    f.write(reinterpret_cast<const char*>(&fv), sizeof(fv));
  }
}

Map2D read_raw_f32(const fs::path& path, int height, int width) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot read prediction dump " + path.string());
  Map2D map(height, width);
  for (real& v : map.data) {
    float fv = 0;
    f.read(reinterpret_cast<char*>(&fv), sizeof(fv));
    v = fv;
  }
  if (!f) throw DataError("truncated prediction dump " + path.string());
  return map;
}

MetricsReport mean_report(const std::vector<std::pair<std::string, MetricsReport>>& rows) {
  MetricsReport mean;
  for (const auto& [name, r] : rows) {
    mean.i_auroc += r.i_auroc;
    mean.p_auroc += r.p_auroc;
    mean.p_pro += r.p_pro;
    mean.ap += r.ap;
    mean.n_images += r.n_images;
    mean.n_defect_images += r.n_defect_images;
  }
  const real n = (real)rows.size();
  mean.i_auroc /= n;
  mean.p_auroc /= n;
  mean.p_pro /= n;
  mean.ap /= n;
  return mean;
}

void write_metrics_csv(const fs::path& path,
                       const std::vector<std::pair<std::string, MetricsReport>>& rows) {
  std::ofstream csv(path);
  csv << "category,i_auroc,p_auroc,p_pro,ap,n_images,n_defect_images\n";
  for (const auto& [name, r] : rows) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%.6f,%.6f,%d,%d\n", name.c_str(), r.i_auroc,
                  r.p_auroc, r.p_pro, r.ap, r.n_images, r.n_defect_images);
    csv << buf;
  }
}

}  // namespace

std::string dump_id(const std::string& source_id) {
  std::string id = source_id;
  std::replace(id.begin(), id.end(), '/', '_');
  return id;
}

void preprocess(const PreprocessArgs& args) {
  args.tiles.validate();
  fs::create_directories(args.output);
  nlohmann::json manifest = nlohmann::json::array();

  for (const fs::path& src : collect_images(args.input)) {
    const Image img = read_image(src);
    const fs::path rel = fs::relative(src, args.input);
    for (const auto& [rect, tile] : tile_image(img, args.tiles)) {
      fs::path rel_dir = rel.parent_path();
      fs::create_directories(args.output / rel_dir);
      const std::string name = rel.stem().string() + "__y" + std::to_string(rect.y) + "_x" +
                               std::to_string(rect.x) + ".png";
      const fs::path dst = args.output / rel_dir / name;
      write_image(dst, tile);
      manifest.push_back({{"source", rel.generic_string()},
                          {"tile", (rel_dir / name).generic_string()},
                          {"y", rect.y},
                          {"x", rect.x},
                          {"height", rect.height},
                          {"width", rect.width}});
    }
  }
  std::ofstream mf(args.output / "manifest.json");
  mf << manifest.dump(2) << "\n";
  std::printf("preprocess: wrote %zu tiles under %s\n", manifest.size(),
              args.output.string().c_str());
}

std::vector<std::pair<std::string, TrainResult>> train(
    const TrainConfig& cfg, const std::optional<fs::path>& resume) {
  if (cfg.categories.empty()) throw ConfigError("no categories configured");
  std::vector<std::pair<std::string, TrainResult>> out;
  for (const std::string& category : cfg.categories) {
    std::printf("train: category %s (%d epochs)\n", category.c_str(), cfg.epochs);
    Trainer trainer(cfg, category);
    out.emplace_back(category, trainer.run(resume));
  }
  return out;
}

namespace {

std::vector<std::pair<std::string, MetricsReport>> eval_from_model(const EvalArgs& args) {
  std::vector<std::pair<std::string, MetricsReport>> rows;
  for (const std::string& category : args.cfg.categories) {
    const fs::path ckpt = args.checkpoint.value_or(args.cfg.output_dir / category /
                                                   "checkpoint_latest.cfrgt");
    Pipeline pipeline = restore_pipeline(args.cfg, ckpt, args.allow_hash_mismatch);
    DatasetLayout layout = scan_layout(args.cfg.data_root, category);
    rows.emplace_back(category, evaluate_pipeline(pipeline, layout));
  }
  return rows;
}

std::vector<std::pair<std::string, MetricsReport>> eval_from_dumps(const EvalArgs& args) {
  const fs::path dir = *args.predictions_dir;
  // image scores from the csv written by `infer`
  std::map<std::string, real> scores;
  std::ifstream csv(dir / "scores.csv");
  if (!csv) throw DataError("missing scores.csv in predictions dir " + dir.string());
  std::string line;
  std::getline(csv, line);  // header
  while (std::getline(csv, line)) {
    const auto comma = line.find_last_of(',');
    if (comma == std::string::npos) continue;
    scores[line.substr(0, comma)] = std::stod(line.substr(comma + 1));
  }

  std::vector<std::pair<std::string, MetricsReport>> rows;
  for (const std::string& category : args.cfg.categories) {
    DatasetLayout layout = scan_layout(args.cfg.data_root, category);
    std::vector<EvalPair> pairs;
    for (const SampleEntry& entry : layout.split_entries(Split::test)) {
      const std::string id = dump_id(entry.source_id);
      std::ifstream sidecar(dir / (id + ".json"));
      if (!sidecar) throw DataError("missing prediction sidecar for " + id);
      nlohmann::json meta;
      sidecar >> meta;
      EvalPair p;
      p.pixel_scores =
          read_raw_f32(dir / (id + ".f32"), meta.at("height").get<int>(), meta.at("width").get<int>());
      auto it = scores.find(id);
      if (it == scores.end()) throw DataError("no image score recorded for " + id);
      p.image_score = it->second;
      if (!entry.mask_path.empty()) {
        Mask m = read_mask(entry.mask_path);
        p.mask = resize_nearest(m, p.pixel_scores.height, p.pixel_scores.width);
      } else {
        p.mask = Mask(p.pixel_scores.height, p.pixel_scores.width, 0);
      }
      p.anomalous = entry.label == Label::anomalous;
      pairs.push_back(std::move(p));
    }
    ProOptions popts;
    popts.fpr_limit = args.cfg.metrics.pro_fpr_limit;
    popts.max_thresholds = args.cfg.metrics.pro_max_thresholds;
    rows.emplace_back(category, evaluate_category(pairs, popts));
  }
  return rows;
}

}  // namespace

std::vector<std::pair<std::string, MetricsReport>> eval(const EvalArgs& args) {
  if (args.cfg.categories.empty()) throw ConfigError("no categories configured");
  auto rows = args.predictions_dir ? eval_from_dumps(args) : eval_from_model(args);

  fs::create_directories(args.cfg.output_dir);
  for (const auto& [category, report] : rows) {
    std::ofstream jf(args.cfg.output_dir / ("metrics_" + category + ".json"));
    jf << report.to_json().dump(2) << "\n";
  }
  rows.emplace_back("mean", mean_report(rows));
  write_metrics_csv(args.cfg.output_dir / "metrics.csv", rows);

  for (const auto& [name, r] : rows)
    std::printf("eval %-12s I-AUROC %.4f  P-AUROC %.4f  P-PRO %.4f  AP %.4f\n", name.c_str(),
                r.i_auroc, r.p_auroc, r.p_pro, r.ap);
  return rows;
}

void infer(const InferArgs& args) {
  fs::create_directories(args.output_dir);
  std::ofstream csv(args.output_dir / "scores.csv");
  csv << "id,image_score\n";

  auto dump_one = [&](Pipeline& pipeline, const Image& image01, const std::string& id) {
    AnomalyScoreMap score = pipeline.score_image(image01);
    real hi = *std::max_element(score.pixel_scores.data.begin(), score.pixel_scores.data.end());
    write_heatmap_png16(args.output_dir / (id + ".png"), score.pixel_scores, 0.0,
                        std::max(hi, (real)1e-12));
    write_raw_f32(args.output_dir / (id + ".f32"), score.pixel_scores);
    nlohmann::json sidecar = {{"height", score.pixel_scores.height},
                              {"width", score.pixel_scores.width},
                              {"dtype", "float32"},
                              {"order", "row-major"}};
    std::ofstream sf(args.output_dir / (id + ".json"));
    sf << sidecar.dump(2) << "\n";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9g", score.image_score);
    csv << id << "," << buf << "\n";
  };

  if (args.input_dir) {
    if (args.cfg.categories.empty()) throw ConfigError("no categories configured");
    const fs::path ckpt = args.checkpoint.value_or(
        args.cfg.output_dir / args.cfg.categories.front() / "checkpoint_latest.cfrgt");
    Pipeline pipeline = restore_pipeline(args.cfg, ckpt, args.allow_hash_mismatch);
    pipeline.set_training(false);
    for (const fs::path& p : collect_images(*args.input_dir)) {
      Image img = resize_bilinear(read_image(p), args.cfg.resolution, args.cfg.resolution);
      dump_one(pipeline, img, p.stem().string());
    }
  } else {
    for (const std::string& category : args.cfg.categories) {
      const fs::path ckpt = args.checkpoint.value_or(args.cfg.output_dir / category /
                                                     "checkpoint_latest.cfrgt");
      Pipeline pipeline = restore_pipeline(args.cfg, ckpt, args.allow_hash_mismatch);
      pipeline.set_training(false);
      DatasetLayout layout = scan_layout(args.cfg.data_root, category);
      for (const SampleEntry& entry : layout.split_entries(Split::test)) {
        ImageSample sample = load_sample(entry, args.cfg.resolution);
        dump_one(pipeline, sample.image, dump_id(sample.source_id));
      }
    }
  }
}

std::vector<AblationRow> ablate(const TrainConfig& cfg) {
  struct Variant {
    const char* name;
    void (*apply)(AblationConfig&);
  };
  const Variant variants[] = {
      {"full", [](AblationConfig&) {}},
      {"wrc", [](AblationConfig& a) { a.wrc = true; }},
      {"ws", [](AblationConfig& a) { a.ws = true; }},
      {"wp", [](AblationConfig& a) { a.wp = true; }},
      {"wc", [](AblationConfig& a) { a.wc = true; }},
      {"wh", [](AblationConfig& a) { a.wh = true; }},
  };

  std::vector<AblationRow> rows;
  for (const Variant& v : variants) {
    TrainConfig variant_cfg = cfg;
    variant_cfg.ablation = AblationConfig{};
    v.apply(variant_cfg.ablation);
    variant_cfg.output_dir = cfg.output_dir / "ablate" / v.name;
    std::printf("ablate: variant %s\n", v.name);
    train(variant_cfg);

    EvalArgs eargs;
    eargs.cfg = variant_cfg;
    auto reports = eval(eargs);
    rows.push_back({v.name, reports.back().second});  // mean row
  }

  std::vector<std::pair<std::string, MetricsReport>> table;
  for (const auto& r : rows) table.emplace_back(r.name, r.report);
  fs::create_directories(cfg.output_dir);
  write_metrics_csv(cfg.output_dir / "ablation.csv", table);
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json row = r.report.to_json();
    row["variant"] = r.name;
    j.push_back(row);
  }
  std::ofstream jf(cfg.output_dir / "ablation.json");
  jf << j.dump(2) << "\n";

  std::printf("\n%-8s %-10s %-10s %-10s %-10s\n", "variant", "P-AUROC", "I-AUROC", "P-PRO", "AP");
  for (const auto& r : rows)
    std::printf("%-8s %-10.4f %-10.4f %-10.4f %-10.4f\n", r.name.c_str(), r.report.p_auroc,
                r.report.i_auroc, r.report.p_pro, r.report.ap);
  return rows;
}

}  // namespace cfrg::commands
