#include "locedit/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "locedit/image_io.hpp"
#include "locedit/rng.hpp"
#include "locedit/text.hpp"

namespace fs = std::filesystem;

namespace locedit {

namespace {

// Replace the alphanumeric core of `token`, keeping surrounding punctuation.
std::string replace_core(const std::string& token, const std::string& replacement) {
  std::size_t begin = 0;
  std::size_t end = token.size();
  while (begin < end && !std::isalnum(static_cast<unsigned char>(token[begin]))) ++begin;
  while (end > begin && !std::isalnum(static_cast<unsigned char>(token[end - 1]))) --end;
  return token.substr(0, begin) + replacement + token.substr(end);
}

template <typename T>
const T& pick(const std::set<T>& options, Rng& rng) {
  auto it = options.begin();
  std::advance(it, rng.uniform_int(0, static_cast<int>(options.size()) - 1));
  return *it;
}

}  // namespace

std::optional<Mutation> mutate_prompt(const std::string& caption, const Lexicon& lexicon, std::uint64_t seed) {
  const std::vector<std::string> tokens = split_tokens(caption);
  std::vector<std::string> norm(tokens.size());
  std::vector<int> eligible;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    norm[i] = normalize_word(tokens[i]);
    if (norm[i].empty()) continue;
    const PartOfSpeech pos = lexicon.pos_of(norm[i]);
    if (pos == PartOfSpeech::kNoun && !lexicon.cohyponyms_of(norm[i]).empty()) eligible.push_back(static_cast<int>(i));
    if (pos == PartOfSpeech::kAdjective &&
        (!lexicon.antonyms_of(norm[i]).empty() || !lexicon.cohyponyms_of(norm[i]).empty())) {
      eligible.push_back(static_cast<int>(i));
    }
  }
  if (eligible.empty()) return std::nullopt;

  Rng rng(seed);
  const int index = eligible[rng.uniform_int(0, static_cast<int>(eligible.size()) - 1)];
  const std::string& word = norm[index];
  Mutation m;
  m.token_index = index;
  m.replaced_word = word;
  m.replaced_pos = lexicon.pos_of(word);
  if (m.replaced_pos == PartOfSpeech::kAdjective && !lexicon.antonyms_of(word).empty()) {
    m.replacement_word = pick(lexicon.antonyms_of(word), rng);
  } else {
    m.replacement_word = pick(lexicon.cohyponyms_of(word), rng);
  }
  std::vector<std::string> edited = tokens;
  edited[index] = replace_core(tokens[index], m.replacement_word);
  m.edit_prompt = join_tokens(edited);

  if (m.replaced_pos == PartOfSpeech::kNoun) {
    m.diff_source = m.replaced_word;
    m.diff_target = m.replacement_word;
  } else {
    std::string governed;
    for (std::size_t j = index + 1; j < norm.size(); ++j) {
      if (!norm[j].empty() && lexicon.pos_of(norm[j]) == PartOfSpeech::kNoun) {
        governed = norm[j];
        break;
      }
    }
    m.diff_source = governed.empty() ? m.replaced_word : m.replaced_word + " " + governed;
    m.diff_target = governed.empty() ? m.replacement_word : m.replacement_word + " " + governed;
  }
  return m;
}

Embedding query_embedding(const Image& source, const std::string& edit_prompt, const ImageTextEmbedder& embedder) {
  const Embedding a = embedder.embed_image(source);
  const Embedding b = embedder.embed_text(edit_prompt);
  if (a.dim() != b.dim()) throw ShapeError("image and text embeddings differ in dimension");
  std::vector<double> mean(a.dim());
  double norm2 = 0.0;
  for (std::size_t i = 0; i < mean.size(); ++i) {
    mean[i] = 0.5 * (a.values[i] + b.values[i]);
    norm2 += mean[i] * mean[i];
  }
  if (norm2 < 1e-24) throw DegenerateQueryError("image and text embeddings cancel; query is degenerate");
  return normalized(std::move(mean));
}

void EmbeddingIndex::add(std::string id, Embedding embedding) {
  double norm2 = 0.0;
  for (double v : embedding.values) norm2 += v * v;
  if (std::abs(std::sqrt(norm2) - 1.0) > 1e-6) throw ParameterError("index rows must be unit norm (id " + id + ")");
  if (!rows_.empty() && rows_.front().dim() != embedding.dim()) throw ShapeError("index rows differ in dimension");
  ids_.push_back(std::move(id));
  rows_.push_back(std::move(embedding));
}

std::string retrieve_pseudo_target(const Embedding& query, const EmbeddingIndex& index, std::string_view exclude_id) {
  const std::string* best_id = nullptr;
  double best = -2.0;
  for (std::size_t i = 0; i < index.size(); ++i) {
    const std::string& id = index.ids()[i];
    if (id == exclude_id) continue;
    const double sim = query.dot(index.row(i));
    if (best_id == nullptr || sim > best || (sim == best && id < *best_id)) {
      best = sim;
      best_id = &id;
    }
  }
  if (best_id == nullptr) throw RetrievalError("no retrieval candidate besides '" + std::string(exclude_id) + "'");
  return *best_id;
}

int BuildSummary::n_skipped() const {
  int total = 0;
  for (const auto& [_, n] : skipped) total += n;
  return total;
}

nlohmann::json BuildSummary::to_json() const {
  nlohmann::json j;
  j["n_built"] = n_built;
  j["n_skipped"] = n_skipped();
  j["skipped"] = nlohmann::json::object();
  for (const auto& [reason, n] : skipped) j["skipped"][reason] = n;
  return j;
}

namespace {

std::string require_string(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_string()) throw ParameterError(std::string("missing string field '") + key + "'");
  return j[key].get<std::string>();
}

// Removes tracked files unless released.
class OutputJournal {
 public:
  ~OutputJournal() {
    if (released_) return;
    std::error_code ec;
    for (auto it = written_.rbegin(); it != written_.rend(); ++it) fs::remove(*it, ec);
  }
  void track(const fs::path& p) { written_.push_back(p); }
  void release() { released_ = true; }

 private:
  std::vector<fs::path> written_;
  bool released_ = false;
};

}  // namespace

std::vector<ManifestEntry> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  const fs::path base = path.parent_path();
  std::vector<ManifestEntry> entries;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const nlohmann::json j = nlohmann::json::parse(line);
      ManifestEntry e;
      e.id = require_string(j, "id");
      e.source_path = base / require_string(j, "source_path");
      e.target_path = base / require_string(j, "target_path");
      e.source_mask_path = base / require_string(j, "source_mask_path");
      e.target_mask_path = base / require_string(j, "target_mask_path");
      e.source_caption = require_string(j, "source_caption");
      e.edit_prompt = require_string(j, "edit_prompt");
      e.diff_source = require_string(j, "diff_source");
      e.diff_target = require_string(j, "diff_target");
      e.replaced_word = require_string(j, "replaced_word");
      e.replacement_word = require_string(j, "replacement_word");
      e.replaced_pos = parse_pos(require_string(j, "replaced_pos"));
      entries.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw ParameterError("manifest " + path.string() + " line " + std::to_string(line_no) + ": " + ex.what());
    } catch (const ParameterError& ex) {
      throw ParameterError("manifest " + path.string() + " line " + std::to_string(line_no) + ": " + ex.what());
    }
  }
  return entries;
}

BuildSummary build_dataset(std::vector<CaptionedImage> corpus, const ProviderSet& providers, const Lexicon& lexicon,
                           const BuildOptions& options, const fs::path& out_dir) {
  providers.validate();
  std::sort(corpus.begin(), corpus.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < corpus.size(); ++i) {
    if (corpus[i].id == corpus[i - 1].id) throw ParameterError("duplicate corpus id '" + corpus[i].id + "'");
  }
  for (auto& rec : corpus) {
    validate_image(rec.image);
    if (rec.caption.empty()) rec.caption = providers.captioner->caption(rec.image);
  }

  EmbeddingIndex index;
  std::map<std::string, const CaptionedImage*> by_id;
  for (const auto& rec : corpus) {
    index.add(rec.id, providers.embedder->embed_image(rec.image));
    by_id[rec.id] = &rec;
  }

  BuildSummary summary;
  for (const auto& rec : corpus) {
    const std::uint64_t record_seed = derive_seed(options.seed, rec.id);
    auto mutation = mutate_prompt(rec.caption, lexicon, record_seed);
    if (!mutation) {
      ++summary.skipped["no_candidate"];
      continue;
    }
    std::string target_id;
    try {
      const Embedding q = query_embedding(rec.image, mutation->edit_prompt, *providers.embedder);
      target_id = retrieve_pseudo_target(q, index, rec.id);
    } catch (const DegenerateQueryError&) {
      ++summary.skipped["degenerate_query"];
      continue;
    } catch (const RetrievalError&) {
      ++summary.skipped["no_retrieval_candidate"];
      continue;
    }
    const CaptionedImage& target = *by_id.at(target_id);
    Mask m1 = binarize_mask(providers.segmenter->segment(rec.image, mutation->diff_source), options.mask_threshold,
                            mutation->diff_source);
    Mask m2 = binarize_mask(providers.segmenter->segment(target.image, mutation->diff_target),
                            options.mask_threshold, mutation->diff_target);
    if (m1.empty || m2.empty) {
      ++summary.skipped["empty_mask"];
      continue;
    }
    summary.triplets.push_back(
        EditTriplet{rec.id, rec.id, target_id, rec.caption, std::move(*mutation), std::move(m1), std::move(m2)});
  }
  summary.n_built = static_cast<int>(summary.triplets.size());

  OutputJournal journal;
  try {
    fs::create_directories(out_dir / "images");
    fs::create_directories(out_dir / "masks");
    std::set<std::string> written_images;
    auto image_rel = [](const std::string& id) { return "images/" + id + ".png"; };
    auto write_image = [&](const std::string& id) {
      if (!written_images.insert(id).second) return;
      write_png_image(out_dir / image_rel(id), by_id.at(id)->image);
      journal.track(out_dir / image_rel(id));
    };
    const fs::path manifest = out_dir / "manifest.jsonl";
    const fs::path tmp = out_dir / "manifest.jsonl.tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw IoError("cannot write " + tmp.string());
      journal.track(tmp);
      for (const auto& t : summary.triplets) {
        write_image(t.source_id);
        write_image(t.target_id);
        const std::string m1 = "masks/" + t.id + "_source.png";
        const std::string m2 = "masks/" + t.id + "_target.png";
        write_png_mask(out_dir / m1, t.source_mask);
        journal.track(out_dir / m1);
        write_png_mask(out_dir / m2, t.target_mask);
        journal.track(out_dir / m2);
        nlohmann::ordered_json j;
        j["id"] = t.id;
        j["source_path"] = image_rel(t.source_id);
        j["target_path"] = image_rel(t.target_id);
        j["source_caption"] = t.source_caption;
        j["edit_prompt"] = t.mutation.edit_prompt;
        j["diff_source"] = t.mutation.diff_source;
        j["diff_target"] = t.mutation.diff_target;
        j["source_mask_path"] = m1;
        j["target_mask_path"] = m2;
        j["replaced_word"] = t.mutation.replaced_word;
        j["replacement_word"] = t.mutation.replacement_word;
        j["replaced_pos"] = to_string(t.mutation.replaced_pos);
        out << j.dump() << '\n';
      }
      if (!out.flush()) throw IoError("failed writing " + tmp.string());
    }
    fs::rename(tmp, manifest);
    journal.track(manifest);
    summary.manifest_path = manifest;
  } catch (const fs::filesystem_error& e) {
    throw IoError(std::string("dataset output failed: ") + e.what());
  }
  journal.release();
  return summary;
}

}  // namespace locedit
