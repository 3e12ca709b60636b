// Command-line front end: dataset building, training, editing, evaluation and reports.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "locedit/config.hpp"
#include "locedit/dataset.hpp"
#include "locedit/editor.hpp"
#include "locedit/image_io.hpp"
#include "locedit/metrics.hpp"
#include "locedit/report.hpp"
#include "locedit/shapes_world.hpp"
#include "locedit/trainer.hpp"

namespace fs = std::filesystem;
using namespace locedit;

namespace {

Config config_from(const std::string& path) { return path.empty() ? Config{} : load_config(path); }

void require_exists(const fs::path& p, const char* what) {
  if (!fs::exists(p)) throw IoError(std::string(what) + " not found: " + p.string());
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot read " + p.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + p.string());
  out << text;
  if (!out) throw IoError("failed writing " + p.string());
}

// A corpus is either a directory of PNGs (captions come from the captioner) or a JSONL file
// of {"id", "image", "caption"?} with image paths relative to the file.
std::vector<CaptionedImage> read_corpus(const fs::path& path) {
  require_exists(path, "corpus");
  std::vector<CaptionedImage> corpus;
  if (fs::is_directory(path)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(path)) {
      if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) corpus.push_back({f.stem().string(), read_png_image(f), ""});
    return corpus;
  }
  std::istringstream in(read_text(path));
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      CaptionedImage item;
      item.id = j.at("id").get<std::string>();
      item.caption = j.value("caption", std::string());
      item.image = read_png_image(path.parent_path() / j.at("image").get<std::string>());
      corpus.push_back(std::move(item));
    } catch (const nlohmann::json::exception& e) {
      throw ParameterError("corpus line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return corpus;
}

std::unique_ptr<TrainableDenoiser> fresh_model(const ProviderSet& providers, const NoiseSchedule& sched, int height,
                                               int width, std::uint64_t seed) {
  ToyDenoiserConfig cfg;
  cfg.latent = providers.autoencoder->latent_shape(height, width);
  cfg.cond_dim = providers.text_encoder->dim();
  cfg.max_step = sched.max_step();
  return std::make_unique<ToyDenoiser>(cfg, derive_seed(seed, "init"));
}

struct Common {
  std::string config;
  std::uint64_t seed = 0;
};

int cmd_make_shapes(const fs::path& out, int n, int resolution, std::uint64_t seed) {
  const auto world = shapes::make_shapes_world(seed, n, resolution);
  std::ostringstream corpus;
  for (const auto& r : world) {
    const std::string image = "images/" + r.id + ".png";
    const std::string mask = "masks/" + r.id + ".png";
    write_png_image(out / image, r.image);
    write_png_mask(out / mask, r.mask);
    nlohmann::ordered_json j;
    j["id"] = r.id;
    j["image"] = image;
    j["caption"] = r.attributes.caption();
    j["mask"] = mask;
    corpus << j.dump() << '\n';
  }
  write_text(out / "corpus.jsonl", corpus.str());
  std::cout << "wrote " << world.size() << " images to " << out.string() << "\n";
  return 0;
}

int cmd_build_dataset(const Common& common, const fs::path& corpus_path, const fs::path& out,
                      const std::string& lexicon_path) {
  const Config cfg = config_from(common.config);
  auto corpus = read_corpus(corpus_path);
  const Lexicon lex = lexicon_path.empty() ? shapes::shapes_lexicon() : Lexicon::load(lexicon_path);
  const ProviderSet providers = make_providers(cfg.providers);
  BuildOptions opts;
  opts.seed = common.seed;
  opts.mask_threshold = cfg.edit.mask_threshold;
  const BuildSummary summary = build_dataset(std::move(corpus), providers, lex, opts, out);
  std::cout << summary.to_json().dump() << "\n";
  return 0;
}

int cmd_pretrain(const Common& common, const fs::path& corpus_path, const fs::path& out_ckpt,
                 std::optional<long> steps, std::optional<double> lr, std::optional<double> dropout) {
  const Config cfg = config_from(common.config);
  const auto corpus = read_corpus(corpus_path);
  if (corpus.empty()) throw ParameterError("pretrain: empty corpus");
  const ProviderSet providers = make_providers(cfg.providers);
  const NoiseSchedule sched = cfg.schedule.make();
  auto model = fresh_model(providers, sched, corpus.front().image.height(), corpus.front().image.width(),
                           common.seed);
  PretrainConfig pc;
  pc.seed = common.seed;
  if (steps) pc.steps = *steps;
  if (lr) pc.lr = *lr;
  if (dropout) pc.prompt_dropout = *dropout;
  const auto losses = pretrain(corpus, *model, providers, sched, pc);
  Checkpoint ck;
  ck.params.assign(model->parameters().begin(), model->parameters().end());
  ck.model = model->architecture();
  ck.schedule = sched.to_json();
  ck.config = {{"pretrain", pc.to_json()}};
  ck.step = 0;
  const std::size_t tail = std::min<std::size_t>(losses.size(), 100);
  ck.loss_tail.assign(losses.end() - static_cast<std::ptrdiff_t>(tail), losses.end());
  ck.save(out_ckpt);
  std::cout << "pretrained " << pc.steps << " steps -> " << out_ckpt.string() << "\n";
  return 0;
}

int cmd_train(const Common& common, const fs::path& manifest, const fs::path& out_ckpt, std::optional<long> steps,
              const std::string& init_ckpt) {
  const Config cfg = config_from(common.config);
  const auto samples = load_training_samples(read_manifest(manifest));
  if (samples.empty()) throw ParameterError("manifest has no triplets: " + manifest.string());
  const ProviderSet providers = make_providers(cfg.providers);

  std::unique_ptr<TrainableDenoiser> model;
  NoiseSchedule sched = cfg.schedule.make();
  if (!init_ckpt.empty()) {
    const Checkpoint init = Checkpoint::load(init_ckpt);
    model = init.make_model();
    if (!cfg.has("schedule.T") && !cfg.has("schedule.kind") && !cfg.has("schedule.beta_start") &&
        !cfg.has("schedule.beta_end")) {
      sched = init.make_schedule();
    }
  } else {
    model = fresh_model(providers, sched, samples.front().source.height(), samples.front().source.width(),
                        common.seed);
  }

  TrainConfig tc;
  tc.steps = steps ? *steps : cfg.train.steps;
  tc.lr = cfg.train.lr;
  tc.lambda_perc = cfg.train.lambda_perc;
  tc.seed = common.seed;
  tc.alternation_period = cfg.train.alternation_period;
  tc.ckpt_every = cfg.train.ckpt_every;
  tc.optimizer = cfg.train.optimizer;
  FitOutputs outputs;
  outputs.checkpoint = out_ckpt;
  outputs.loss_log = cfg.train.log_path.empty() ? fs::path(out_ckpt.string() + ".log.jsonl") : cfg.train.log_path;
  const Checkpoint ck = fit(samples, *model, providers, sched, tc, outputs);
  std::cout << "trained " << ck.step << " steps -> " << out_ckpt.string() << "\n";
  return 0;
}

struct EditFlags {
  std::string ckpt;
  std::string image;
  std::string prompt;
  std::optional<std::string> diff_prompt;
  std::optional<std::string> mask;
  std::optional<double> strength;
  std::optional<double> guidance;
  std::optional<int> variants;
  std::string out;
};

int cmd_edit(const Common& common, const EditFlags& f) {
  const Config cfg = config_from(common.config);
  const Checkpoint ck = Checkpoint::load(f.ckpt);
  const auto model = ck.make_model();
  const NoiseSchedule sched = ck.make_schedule();
  const ProviderSet providers = make_providers(cfg.providers);

  EditRequest req;
  req.image = read_png_image(f.image);
  req.prompt = f.prompt;
  req.diff_prompt = f.diff_prompt;
  if (f.mask) req.mask = read_png_mask(*f.mask);
  req.use_mask = f.diff_prompt.has_value() || f.mask.has_value();
  req.strength = f.strength.value_or(cfg.edit.strength);
  req.guidance = f.guidance.value_or(cfg.edit.guidance);
  req.n_variants = f.variants.value_or(cfg.edit.variants);
  req.ddim_steps = cfg.edit.ddim_steps;
  req.mask_threshold = cfg.edit.mask_threshold;
  req.seed = common.seed;

  const EditResult result = edit(req, *model, sched, providers);
  for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";

  const fs::path out(f.out);
  std::vector<std::string> outputs;
  for (std::size_t i = 0; i < result.images.size(); ++i) {
    const std::string name = "variant_" + std::to_string(i) + ".png";
    write_png_image(out / name, result.images[i]);
    outputs.push_back(name);
  }
  std::optional<std::string> mask_name;
  if (result.mask_used) {
    mask_name = "mask.png";
    write_png_mask(out / *mask_name, *result.mask_used);
  }
  nlohmann::ordered_json inputs;
  inputs["image"] = f.image;
  inputs["prompt"] = req.prompt;
  inputs["diff_prompt"] = f.diff_prompt ? nlohmann::ordered_json(*f.diff_prompt) : nlohmann::ordered_json(nullptr);
  inputs["mask"] = f.mask ? nlohmann::ordered_json(*f.mask) : nlohmann::ordered_json(nullptr);
  inputs["strength"] = req.strength;
  inputs["guidance"] = req.guidance;
  inputs["variants"] = req.n_variants;
  inputs["ddim_steps"] = req.ddim_steps;
  inputs["seed"] = req.seed;
  inputs["checkpoint"] = f.ckpt;
  write_text(out / "result.json", result_manifest(inputs, result, outputs, mask_name).dump(2) + "\n");
  std::cout << "wrote " << outputs.size() << " variants to " << out.string() << "\n";
  return 0;
}

int cmd_eval(const Common& common, const fs::path& records_path, const fs::path& edited_dir, const fs::path& out,
             const std::string& method) {
  const Config cfg = config_from(common.config);
  require_exists(records_path, "records file");
  require_exists(edited_dir, "edited directory");
  const ProviderSet providers = make_providers(cfg.providers);

  struct Row {
    std::string id;
    fs::path source;
    fs::path mask;
    std::string prompt;
  };
  std::vector<Row> rows;
  std::istringstream in(read_text(records_path));
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      const auto base = records_path.parent_path();
      const std::string mask_key = j.contains("mask_path") ? "mask_path" : "source_mask_path";
      rows.push_back({j.at("id").get<std::string>(), base / j.at("source_path").get<std::string>(),
                      base / j.at(mask_key).get<std::string>(), j.at("edit_prompt").get<std::string>()});
    } catch (const nlohmann::json::exception& e) {
      throw ParameterError("records line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (rows.empty()) throw ParameterError("no evaluation records in " + records_path.string());

  std::set<std::string> record_ids;
  for (const auto& r : rows) record_ids.insert(r.id);
  std::set<std::string> edited_ids;
  for (const auto& e : fs::directory_iterator(edited_dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") edited_ids.insert(e.path().stem().string());
  }
  std::vector<std::string> orphans;
  for (const auto& id : record_ids) {
    if (!edited_ids.count(id)) orphans.push_back(id + " (no edited image)");
  }
  for (const auto& id : edited_ids) {
    if (!record_ids.count(id)) orphans.push_back(id + " (no record)");
  }
  if (!orphans.empty()) {
    std::string msg = "records and edited images do not align:";
    for (const auto& o : orphans) msg += "\n  " + o;
    throw ParameterError(msg);
  }

  std::vector<EvalRecord> records;
  for (const auto& r : rows) {
    records.push_back({r.id, read_png_image(r.source), read_png_image(edited_dir / (r.id + ".png")), r.prompt,
                       read_png_mask(r.mask)});
  }
  const MetricsReport rep = evaluate(records, providers, cfg.clip_rescale);
  const std::string table = format_table({{method, rep}});
  nlohmann::ordered_json j;
  j["method"] = method;
  j["metrics"] = rep.to_json();
  write_text(out / "metrics.json", j.dump(2) + "\n");
  write_text(out / "metrics.txt", table);
  std::cout << table;
  return 0;
}

int cmd_report(const std::vector<std::string>& results, const fs::path& out) {
  std::vector<ReportColumn> columns;
  for (const auto& r : results) {
    const fs::path path(r);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(read_text(path));
    } catch (const nlohmann::json::exception& e) {
      throw IoError("unreadable result manifest " + path.string() + ": " + e.what());
    }
    ReportColumn col;
    try {
      col.caption = j.at("inputs").at("prompt").get<std::string>();
      for (const auto& o : j.at("outputs")) col.cells.push_back(read_png_image(path.parent_path() / o.get<std::string>()));
    } catch (const nlohmann::json::exception& e) {
      throw IoError("malformed result manifest " + path.string() + ": " + e.what());
    } catch (const Error& e) {
      throw IoError(e.what());
    }
    columns.push_back(std::move(col));
  }
  write_png_image(out, make_grid(columns));
  std::cout << "wrote " << out.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Localised text-guided image editing toolkit"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "Configuration file")->check(CLI::ExistingFile);
    sub->add_option("--seed", common.seed, "Seed for all randomness");
  };

  std::string out, corpus, lexicon, manifest, out_ckpt, init_ckpt, records, edited, method = "edited";
  int n_images = 200;
  int resolution = 32;
  std::optional<long> steps;
  std::optional<double> lr;
  std::optional<double> dropout;
  EditFlags ef;
  std::vector<std::string> results;

  auto* make_shapes = app.add_subcommand("make-shapes", "Render a synthetic shapes corpus");
  make_shapes->add_option("--out", out, "Output directory")->required();
  make_shapes->add_option("--n", n_images, "Number of images");
  make_shapes->add_option("--resolution", resolution, "Image side in pixels");
  make_shapes->add_option("--seed", common.seed, "Seed");

  auto* build = app.add_subcommand("build-dataset", "Build the paired editing dataset");
  add_common(build);
  build->add_option("--corpus", corpus, "Corpus JSONL or directory of PNGs")->required();
  build->add_option("--out", out, "Output directory")->required();
  build->add_option("--lexicon", lexicon, "Lexicon JSON (default: shapes lexicon)");

  auto* pre = app.add_subcommand("pretrain", "Train a text-conditioned denoiser on a captioned corpus");
  add_common(pre);
  pre->add_option("--corpus", corpus, "Corpus JSONL or directory of PNGs")->required();
  pre->add_option("--out-ckpt", out_ckpt, "Checkpoint path")->required();
  pre->add_option("--steps", steps, "Training steps");
  pre->add_option("--lr", lr, "Learning rate");
  pre->add_option("--prompt-dropout", dropout, "Probability of training on the empty prompt");

  auto* train = app.add_subcommand("train", "Fine-tune the denoiser on a dataset manifest");
  add_common(train);
  train->add_option("--manifest", manifest, "Dataset manifest")->required();
  train->add_option("--out-ckpt", out_ckpt, "Checkpoint path")->required();
  train->add_option("--steps", steps, "Training steps (overrides train.steps)");
  train->add_option("--init-ckpt", init_ckpt, "Start from this checkpoint instead of a fresh model");

  auto* ed = app.add_subcommand("edit", "Edit an image with a text prompt");
  add_common(ed);
  ed->add_option("--ckpt", ef.ckpt, "Checkpoint")->required();
  ed->add_option("--image", ef.image, "Input PNG")->required();
  ed->add_option("--prompt", ef.prompt, "Edit prompt")->required();
  ed->add_option("--diff-prompt", ef.diff_prompt, "Words naming the region to edit (enables masking)");
  ed->add_option("--mask", ef.mask, "Explicit mask PNG (enables masking)");
  ed->add_option("--strength", ef.strength, "Fraction of the trajectory to re-noise");
  ed->add_option("--guidance", ef.guidance, "Classifier-free guidance scale");
  ed->add_option("--variants", ef.variants, "Number of outputs");
  ed->add_option("--out", ef.out, "Output directory")->required();

  auto* ev = app.add_subcommand("eval", "Score edited images");
  add_common(ev);
  ev->add_option("--records", records, "Records JSONL")->required();
  ev->add_option("--edited", edited, "Directory of <id>.png edits")->required();
  ev->add_option("--out", out, "Output directory")->required();
  ev->add_option("--method", method, "Row label in the table");

  auto* rep = app.add_subcommand("report", "Compose result manifests into a comparison grid");
  rep->add_option("--results", results, "Result manifests (one column each)")->required()->expected(1, -1);
  rep->add_option("--out", out, "Output PNG")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ExitCode::kInvalidInput);
  }

  try {
    if (*make_shapes) return cmd_make_shapes(out, n_images, resolution, common.seed);
    if (*build) return cmd_build_dataset(common, corpus, out, lexicon);
    if (*pre) return cmd_pretrain(common, corpus, out_ckpt, steps, lr, dropout);
    if (*train) return cmd_train(common, manifest, out_ckpt, steps, init_ckpt);
    if (*ed) return cmd_edit(common, ef);
    if (*ev) return cmd_eval(common, records, edited, out, method);
    if (*rep) return cmd_report(results, out);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.exit_code());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kIo);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kIo);
  }
  return 0;
}
