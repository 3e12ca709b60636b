#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "locedit/lexicon.hpp"
#include "locedit/providers.hpp"

namespace locedit {

class DegenerateQueryError : public Error {
 public:
  using Error::Error;
};

struct CaptionedImage {
  std::string id;
  Image image;
  std::string caption;  // empty: produced by the captioner
};

// One-word substitution turning a caption into an edit prompt.
struct Mutation {
  std::string edit_prompt;
  std::string diff_source;
  std::string diff_target;
  std::string replaced_word;
  std::string replacement_word;
  PartOfSpeech replaced_pos = PartOfSpeech::kOther;
  int token_index = 0;
};

// Picks (seeded, uniformly) one noun/adjective with a substitute and replaces it.
// Adjectives take an antonym when one exists, else a co-hyponym; nouns take a co-hyponym.
// Returns nullopt when no token is eligible.
std::optional<Mutation> mutate_prompt(const std::string& caption, const Lexicon& lexicon, std::uint64_t seed);

// normalize((embed_image(source) + embed_text(prompt)) / 2); DegenerateQueryError on a zero mean.
Embedding query_embedding(const Image& source, const std::string& edit_prompt, const ImageTextEmbedder& embedder);

// Exact cosine-similarity index over unit embeddings.
class EmbeddingIndex {
 public:
  void add(std::string id, Embedding embedding);
  std::size_t size() const { return ids_.size(); }
  const std::vector<std::string>& ids() const { return ids_; }
  const Embedding& row(std::size_t i) const { return rows_.at(i); }

 private:
  std::vector<std::string> ids_;
  std::vector<Embedding> rows_;
};

// Highest-cosine id other than `exclude_id`; ties go to the lexicographically smallest id.
std::string retrieve_pseudo_target(const Embedding& query, const EmbeddingIndex& index, std::string_view exclude_id);

struct EditTriplet {
  std::string id;
  std::string source_id;
  std::string target_id;
  std::string source_caption;
  Mutation mutation;
  Mask source_mask;
  Mask target_mask;
};

// A manifest line with paths resolved against the manifest directory.
struct ManifestEntry {
  std::string id;
  std::filesystem::path source_path;
  std::filesystem::path target_path;
  std::filesystem::path source_mask_path;
  std::filesystem::path target_mask_path;
  std::string source_caption;
  std::string edit_prompt;
  std::string diff_source;
  std::string diff_target;
  std::string replaced_word;
  std::string replacement_word;
  PartOfSpeech replaced_pos = PartOfSpeech::kOther;
};

// Parses a manifest; ParameterError names the first malformed line.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

struct BuildSummary {
  int n_built = 0;
  std::map<std::string, int> skipped;  // reason -> count
  std::vector<EditTriplet> triplets;
  std::filesystem::path manifest_path;

  int n_skipped() const;
  nlohmann::json to_json() const;
};

struct BuildOptions {
  std::uint64_t seed = 0;
  double mask_threshold = 0.5;
};

// Writes <out_dir>/manifest.jsonl, images/<id>.png and masks/<id>_{source,target}.png.
// On an I/O failure every file written so far is removed before the error propagates.
BuildSummary build_dataset(std::vector<CaptionedImage> corpus, const ProviderSet& providers, const Lexicon& lexicon,
                           const BuildOptions& options, const std::filesystem::path& out_dir);

}  // namespace locedit
