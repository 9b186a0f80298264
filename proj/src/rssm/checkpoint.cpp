// SPDX-License-Identifier: Apache-2.0
#include "wmd/rssm/checkpoint.hpp"

#include "wmd/core/errors.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace wmd {

namespace {
constexpr const char* kMagic = "WMDCKPT";
constexpr int kVersion = 1;

std::string hexfloat(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

bool valid_token(const std::string& s) {
  return !s.empty() && s.find_first_of(" \t\r\n") == std::string::npos;
}
}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path.string());
  out << kMagic << ' ' << kVersion << '\n';
  for (const auto& [k, v] : ckpt.meta) {
    if (!valid_token(k) || v.find('\n') != std::string::npos) throw IoError("checkpoint meta entry not storable: " + k);
    out << "meta " << k << ' ' << v << '\n';
  }
  for (const auto& [name, m] : ckpt.arrays) {
    if (!valid_token(name)) throw IoError("checkpoint array name not storable: " + name);
    out << "array " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) out << (c ? " " : "") << hexfloat(m(r, c));
      out << '\n';
    }
  }
  out << "end\n";
  if (!out) throw IoError("failed writing checkpoint: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != kMagic) throw IoError("not a checkpoint file: " + path.string());
  if (version != kVersion) throw IoError("unsupported checkpoint version " + std::to_string(version));

  Checkpoint ckpt;
  std::string tag;
  while (in >> tag) {
    if (tag == "end") return ckpt;
    if (tag == "meta") {
      std::string key, value;
      in >> key;
      std::getline(in, value);
      if (!value.empty() && value.front() == ' ') value.erase(0, 1);
      ckpt.meta[key] = value;
    } else if (tag == "array") {
      std::string name;
      Eigen::Index rows = -1, cols = -1;
      in >> name >> rows >> cols;
      if (!in || rows < 0 || cols < 0) throw IoError("malformed array header in " + path.string());
      Matrix m(rows, cols);
      std::string token;
      for (Eigen::Index i = 0; i < m.size(); ++i) {
        if (!(in >> token)) throw IoError("truncated array '" + name + "' in " + path.string());
        char* end = nullptr;
        m.data()[i] = std::strtod(token.c_str(), &end);
        if (end == token.c_str() || *end != '\0') throw IoError("bad value in array '" + name + "'");
      }
      ckpt.arrays.add(name, std::move(m));
    } else {
      throw IoError("unexpected token '" + tag + "' in " + path.string());
    }
  }
  throw IoError("checkpoint missing end marker: " + path.string());
}

}  // namespace wmd
