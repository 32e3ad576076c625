#pragma once

#include <compare>
#include <filesystem>
#include <string>
#include <vector>

#include "pairinfer/document.hpp"

namespace pairinfer {

// DocRED-convention records: title, sents, vertexSet[{name, sent_id, pos, type}],
// labels[{h, t, r, evidence}]. `pos` is sentence-local; documents carry
// global token offsets.
std::vector<Document> parse_docred(const std::string& json_text);
std::vector<Document> load_docred(const std::filesystem::path& path);
std::string dump_docred(const std::vector<Document>& docs);
void save_docred(const std::vector<Document>& docs, const std::filesystem::path& path);

struct Prediction {
  std::string title;
  std::size_t h = 0;
  std::size_t t = 0;
  std::string relation;

  auto operator<=>(const Prediction&) const = default;
};

// Deduplicated array of {title, h_idx, t_idx, r}, sorted by those keys.
std::string dump_submission(std::vector<Prediction> predictions);
std::vector<Prediction> parse_submission(const std::string& json_text);
void export_submission(const std::vector<Prediction>& predictions, const std::filesystem::path& path);
std::vector<Prediction> import_submission(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace pairinfer
