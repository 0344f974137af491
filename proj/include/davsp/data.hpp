#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "davsp/rng.hpp"
#include "davsp/tensor.hpp"

namespace davsp {

enum class Label { malicious, benign };

std::string label_to_string(Label label);
Label label_from_string(const std::string& s);

enum class Provenance { unassigned, vector_construction, prompt_training, evaluation };

std::string provenance_to_string(Provenance p);

struct QuerySample {
  std::string id;
  ImageTensor image;
  std::string text;
  Label label = Label::benign;
  std::optional<std::string> target_response;
};

struct DatasetSplit {
  std::string name;
  std::vector<QuerySample> samples;
  Provenance provenance = Provenance::unassigned;

  std::size_t count(Label label) const;
};

// JSONL ingestion. Each line: {"image_path": ..., "text": ..., "label":
// "malicious"|"benign", "target_response": optional}. Image paths resolve
// relative to the JSONL file's directory.
DatasetSplit load_dataset(const std::filesystem::path& jsonl_path);

// Writes samples as JSONL plus one PNG per sample under `dir`.
void save_dataset(const DatasetSplit& split, const std::filesystem::path& dir,
                  const std::string& stem);

// Synthetic activation-separable data. Malicious: high-contrast checker patch
// in one quadrant plus a fixed trigger trigram in the text; benign: smooth
// low-frequency image, trigger-free text. Each sample carries a fixed
// label-dependent target response.
extern const char* const kTriggerTrigram;
extern const char* const kRefusalTarget;
extern const char* const kBenignTarget;

DatasetSplit gen_synthetic(Rng& rng, std::size_t n_mal, std::size_t n_ben,
                           std::size_t h, std::size_t w);

// Disjoint, label-stratified pools for vector construction, prompt training,
// and evaluation. Fractions must sum to 1.
struct PipelineSplits {
  DatasetSplit vector_construction;
  DatasetSplit prompt_training;
  DatasetSplit evaluation;
};

PipelineSplits split_for_pipeline(const DatasetSplit& ds, Rng& rng,
                                  double f_vector, double f_train, double f_eval);

// Throws when any sample appears in more than one pool.
void check_disjoint(const std::vector<const DatasetSplit*>& pools);

}  // namespace davsp
