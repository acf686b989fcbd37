#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "sar/image.hpp"

namespace sar {

struct Sample {
  Image image;
  std::string label;
  std::string id;
};

struct ManifestEntry {
  std::string image_path;  // resolved against the manifest's directory
  std::string label;
};

// Tab-separated `image_path<TAB>label`, UTF-8, LF line ends.
inline std::vector<ManifestEntry> load_manifest(const std::string& manifest_path) {
  std::ifstream in(manifest_path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open manifest: " + manifest_path);
  const auto base = std::filesystem::path(manifest_path).parent_path();
  std::vector<ManifestEntry> entries;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || tab + 1 == line.size())
      throw std::runtime_error(manifest_path + ":" + std::to_string(lineno) +
                               ": expected `image_path<TAB>label`");
    ManifestEntry e;
    e.image_path = (base / line.substr(0, tab)).string();
    e.label = line.substr(tab + 1);
    entries.push_back(std::move(e));
  }
  return entries;
}

inline Sample load_sample(const ManifestEntry& e) {
  Sample s;
  if (!std::filesystem::exists(e.image_path))
    throw std::runtime_error("manifest references missing image: " + e.image_path);
  s.image = read_image(e.image_path);
  s.label = e.label;
  s.id = std::filesystem::path(e.image_path).stem().string();
  return s;
}

inline std::vector<Sample> load_dataset(const std::string& manifest_path) {
  std::vector<Sample> out;
  for (const auto& e : load_manifest(manifest_path)) out.push_back(load_sample(e));
  return out;
}

// Writes rasters plus a manifest into out_dir; paths in the manifest are
// relative to it. Returns the manifest path.
inline std::string write_dataset(const std::vector<Sample>& samples,
                                 const std::string& out_dir,
                                 const std::string& manifest_name = "manifest.tsv") {
  std::filesystem::create_directories(out_dir);
  const auto dir = std::filesystem::path(out_dir);
  std::ofstream mf(dir / manifest_name, std::ios::binary);
  if (!mf) throw std::runtime_error("cannot write manifest in " + out_dir);
  for (const auto& s : samples) {
    const std::string name = s.id + (s.image.channels == 1 ? ".pgm" : ".ppm");
    write_image(s.image, (dir / name).string());
    mf << name << '\t' << s.label << '\n';
  }
  return (dir / manifest_name).string();
}

}  // namespace sar
