#pragma once

#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "lantern/eval.hpp"
#include "lantern/trajectory.hpp"

// Binary trajectory dump ("LNTD"): full hybrid trajectories with latent
// vectors, one record per evaluated or rolled-out sample. Latents are stored
// as f64 regardless of the model precision.

namespace lantern {

struct TrajDumpRecord {
  std::uint64_t seed = 0;
  std::uint8_t family = 0;
  std::vector<int> question, gold;
  struct Step {
    bool latent = false;
    int token = -1;
    double logprob = 0;
    bool sampled = false;
    std::vector<double> z;
  };
  std::vector<Step> steps;
  bool truncated = false;
  double reward_acc = 0, reward_fmt = 0, reward_total = 0;
};

namespace traj_io_detail {
constexpr char kMagic[4] = {'L', 'N', 'T', 'D'};

template <class V>
void wr(std::ofstream& f, V v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(V));
}
inline void wr_ids(std::ofstream& f, const std::vector<int>& ids) {
  wr<std::uint16_t>(f, std::uint16_t(ids.size()));
  for (int id : ids) wr<std::uint16_t>(f, std::uint16_t(id));
}
template <class V>
V rd(std::ifstream& f) {
  V v;
  f.read(reinterpret_cast<char*>(&v), sizeof(V));
  if (!f) throw std::runtime_error("trajectory dump: unexpected end of file");
  return v;
}
inline std::vector<int> rd_ids(std::ifstream& f) {
  const int n = rd<std::uint16_t>(f);
  std::vector<int> out(std::size_t(n), 0);
  for (int i = 0; i < n; ++i) out[std::size_t(i)] = rd<std::uint16_t>(f);
  return out;
}
}  // namespace traj_io_detail

template <class T>
TrajDumpRecord to_dump_record(const eval::EvalDumpEntry<T>& e) {
  TrajDumpRecord r;
  r.seed = e.seed;
  r.family = std::uint8_t(e.family);
  r.question = e.question;
  r.gold = e.gold;
  r.truncated = e.trajectory.truncated;
  r.reward_acc = e.reward.acc;
  r.reward_fmt = e.reward.fmt;
  r.reward_total = e.reward.total;
  for (const auto& s : e.trajectory.steps) {
    TrajDumpRecord::Step d;
    d.latent = s.latent;
    d.token = s.token;
    d.logprob = double(s.logprob);
    d.sampled = s.sampled;
    d.z.assign(s.z.begin(), s.z.end());
    r.steps.push_back(std::move(d));
  }
  return r;
}

inline void write_trajectory_dump(const std::string& path,
                                  const std::vector<TrajDumpRecord>& records) {
  using namespace traj_io_detail;
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
  f.write(kMagic, 4);
  wr<std::uint32_t>(f, std::uint32_t(records.size()));
  for (const auto& r : records) {
    wr<std::uint64_t>(f, r.seed);
    wr<std::uint8_t>(f, r.family);
    wr_ids(f, r.question);
    wr_ids(f, r.gold);
    wr<std::uint8_t>(f, r.truncated ? 1 : 0);
    wr<double>(f, r.reward_acc);
    wr<double>(f, r.reward_fmt);
    wr<double>(f, r.reward_total);
    wr<std::uint32_t>(f, std::uint32_t(r.steps.size()));
    for (const auto& s : r.steps) {
      wr<std::uint8_t>(f, s.latent ? 1 : 0);
      if (s.latent) {
        wr<std::uint16_t>(f, std::uint16_t(s.z.size()));
        f.write(reinterpret_cast<const char*>(s.z.data()),
                std::streamsize(s.z.size() * sizeof(double)));
      } else {
        wr<std::uint16_t>(f, std::uint16_t(s.token));
        wr<std::uint8_t>(f, s.sampled ? 1 : 0);
        wr<double>(f, s.logprob);
      }
    }
  }
}

inline std::vector<TrajDumpRecord> read_trajectory_dump(const std::string& path) {
  using namespace traj_io_detail;
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open '" + path + "'");
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("'" + path + "' is not a trajectory dump");
  const auto count = rd<std::uint32_t>(f);
  std::vector<TrajDumpRecord> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    TrajDumpRecord r;
    r.seed = rd<std::uint64_t>(f);
    r.family = rd<std::uint8_t>(f);
    r.question = rd_ids(f);
    r.gold = rd_ids(f);
    r.truncated = rd<std::uint8_t>(f) != 0;
    r.reward_acc = rd<double>(f);
    r.reward_fmt = rd<double>(f);
    r.reward_total = rd<double>(f);
    const auto n = rd<std::uint32_t>(f);
    for (std::uint32_t s = 0; s < n; ++s) {
      TrajDumpRecord::Step d;
      d.latent = rd<std::uint8_t>(f) != 0;
      if (d.latent) {
        const int dim = rd<std::uint16_t>(f);
        d.z.resize(std::size_t(dim));
        f.read(reinterpret_cast<char*>(d.z.data()),
               std::streamsize(d.z.size() * sizeof(double)));
        if (!f) throw std::runtime_error("trajectory dump: unexpected end of file");
      } else {
        d.token = rd<std::uint16_t>(f);
        d.sampled = rd<std::uint8_t>(f) != 0;
        d.logprob = rd<double>(f);
      }
      r.steps.push_back(std::move(d));
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace lantern
