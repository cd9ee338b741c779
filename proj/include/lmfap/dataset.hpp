#pragma once

#include <algorithm>
#include <filesystem>
#include <string>
#include <vector>

#include "lmfap/error.hpp"
#include "lmfap/imaging.hpp"
#include "lmfap/tensor.hpp"

namespace lmfap {

/// Identity-labelled images for training. Labels are dense in [0, num_classes).
struct LabeledDataset {
  std::vector<Image> images;
  std::vector<std::size_t> labels;
  std::vector<std::string> class_names;
  std::string id;

  std::size_t size() const noexcept { return images.size(); }
  std::size_t num_classes() const noexcept { return class_names.size(); }
};

/// Reads a folder with one subdirectory per subject; files are sorted so the
/// resulting order is stable across runs.
inline LabeledDataset load_identity_folder(const std::filesystem::path& root, std::size_t side = kDefaultSide) {
  if (!std::filesystem::is_directory(root)) throw IoFailure("not a directory: " + root.string());
  std::vector<std::filesystem::path> subjects;
  for (const auto& e : std::filesystem::directory_iterator(root))
    if (e.is_directory()) subjects.push_back(e.path());
  std::sort(subjects.begin(), subjects.end());
  LabeledDataset ds;
  ds.id = root.filename().string();
  for (const auto& dir : subjects) {
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
      const auto ext = e.path().extension().string();
      if (e.is_regular_file() && (ext == ".png" || ext == ".jpg" || ext == ".jpeg")) files.push_back(e.path());
    }
    if (files.empty()) continue;
    std::sort(files.begin(), files.end());
    const std::size_t label = ds.class_names.size();
    ds.class_names.push_back(dir.filename().string());
    for (const auto& f : files) {
      ds.images.push_back(load_image(f, side));
      ds.labels.push_back(label);
    }
  }
  return ds;
}

inline void write_identity_folder(const LabeledDataset& ds, const std::filesystem::path& root) {
  std::vector<std::size_t> counter(ds.num_classes(), 0);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& name = ds.class_names[ds.labels[i]];
    char file[32];
    std::snprintf(file, sizeof file, "%04zu.png", counter[ds.labels[i]]++);
    save_image(ds.images[i], root / name / file);
  }
}

}  // namespace lmfap
