// SPDX-License-Identifier: Apache-2.0
#include "fedvar/data.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>

#include "fedvar/error.hpp"

namespace fedvar {
namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    out.push_back(cell);
  }
  return out;
}

template <class T>
T parse_number(const std::string& s, const std::filesystem::path& path, std::size_t line) {
  T value{};
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError(path.string() + ":" + std::to_string(line) + ": bad number '" + s + "'");
  }
  return value;
}

std::vector<std::vector<std::string>> read_rows(const std::filesystem::path& path,
                                                std::vector<std::string>& header) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ConfigError(path.string() + ": empty file");
  header = split_csv_line(line);
  std::vector<std::vector<std::string>> rows;
  std::size_t n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty() || line == "\r") continue;
    auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw ConfigError(path.string() + ":" + std::to_string(n) + ": expected " +
                        std::to_string(header.size()) + " columns");
    }
    rows.push_back(std::move(cells));
  }
  return rows;
}

void require_header_prefix(const std::vector<std::string>& header,
                           const std::vector<std::string>& want, const std::filesystem::path& p) {
  if (header.size() < want.size() || !std::equal(want.begin(), want.end(), header.begin())) {
    throw ConfigError(p.string() + ": unexpected header");
  }
}

Dataset assemble(std::map<std::size_t, std::vector<Unit>> by_silo) {
  Dataset d;
  for (auto& [id, units] : by_silo) {
    std::sort(units.begin(), units.end(),
              [](const Unit& a, const Unit& b) { return a.global_index < b.global_index; });
    d.silos.push_back(Shard{id, std::move(units)});
  }
  d.validate();
  return d;
}

std::string fmt(double x) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

}  // namespace

std::size_t Dataset::total_units() const noexcept {
  std::size_t n = 0;
  for (const auto& s : silos) n += s.size();
  return n;
}

void Dataset::validate() const {
  if (silos.empty()) throw ConfigError("dataset has no silos");
  std::vector<char> seen(total_units(), 0);
  for (std::size_t j = 0; j < silos.size(); ++j) {
    if (silos[j].silo_id != j) throw ConfigError("silo ids must be 0..J-1 in order");
    for (const auto& u : silos[j].units) {
      if (u.global_index >= seen.size() || seen[u.global_index]) {
        throw ConfigError("global indices must be a permutation of 0..N-1");
      }
      seen[u.global_index] = 1;
    }
  }
}

Dataset partition_sizes(std::vector<Unit> units, const std::vector<std::size_t>& sizes,
                        const RngKey& key) {
  const std::size_t total = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
  if (sizes.empty() || total != units.size()) {
    throw ConfigError("partition sizes must sum to the number of units");
  }
  // Sort by a random key per unit: a permutation that does not depend on
  // the incoming order.
  std::sort(units.begin(), units.end(),
            [](const Unit& a, const Unit& b) { return a.global_index < b.global_index; });
  const auto bits = random_bits(key, units.size());
  std::vector<std::size_t> order(units.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return bits[a] != bits[b] ? bits[a] < bits[b] : a < b;
  });
  std::map<std::size_t, std::vector<Unit>> by_silo;
  std::size_t pos = 0;
  for (std::size_t j = 0; j < sizes.size(); ++j) {
    auto& dst = by_silo[j];
    for (std::size_t k = 0; k < sizes[j]; ++k) dst.push_back(std::move(units[order[pos++]]));
  }
  return assemble(std::move(by_silo));
}

Dataset partition_even(std::vector<Unit> units, std::size_t J, const RngKey& key) {
  if (J == 0 || J > units.size()) throw ConfigError("silo count must be in 1..N");
  std::vector<std::size_t> sizes(J, units.size() / J);
  for (std::size_t j = 0; j < units.size() % J; ++j) ++sizes[j];
  return partition_sizes(std::move(units), sizes, key);
}

std::vector<Unit> pooled_units(const Dataset& data) {
  std::vector<Unit> units;
  units.reserve(data.total_units());
  for (const auto& s : data.silos) units.insert(units.end(), s.units.begin(), s.units.end());
  std::sort(units.begin(), units.end(),
            [](const Unit& a, const Unit& b) { return a.global_index < b.global_index; });
  return units;
}

Dataset repartition(const Dataset& data, std::size_t J, const RngKey& key) {
  return partition_even(pooled_units(data), J, key);
}

Shard pooled_shard(const Dataset& data) { return Shard{0, pooled_units(data)}; }

Dataset read_classification_csv(const std::filesystem::path& path) {
  std::vector<std::string> header;
  const auto rows = read_rows(path, header);
  require_header_prefix(header, {"silo_id", "global_index", "label"}, path);
  const std::size_t d = header.size() - 3;
  for (std::size_t i = 0; i < d; ++i) {
    if (header[3 + i] != "x" + std::to_string(i)) throw ConfigError(path.string() + ": bad feature column");
  }
  std::map<std::size_t, std::vector<Unit>> by_silo;
  std::size_t line = 1;
  for (const auto& r : rows) {
    ++line;
    Unit u;
    u.global_index = parse_number<std::uint64_t>(r[1], path, line);
    Observation o;
    o.y = static_cast<double>(parse_number<long long>(r[2], path, line));
    o.x.resize(d);
    for (std::size_t i = 0; i < d; ++i) o.x[i] = parse_number<double>(r[3 + i], path, line);
    u.obs.push_back(std::move(o));
    by_silo[parse_number<std::size_t>(r[0], path, line)].push_back(std::move(u));
  }
  return assemble(std::move(by_silo));
}

void write_classification_csv(const std::filesystem::path& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  std::size_t d = 0;
  if (!data.silos.empty() && !data.silos[0].units.empty()) d = data.silos[0].units[0].obs.at(0).x.size();
  out << "silo_id,global_index,label";
  for (std::size_t i = 0; i < d; ++i) out << ",x" << i;
  out << '\n';
  for (const auto& s : data.silos) {
    for (const auto& u : s.units) {
      for (const auto& o : u.obs) {
        out << s.silo_id << ',' << u.global_index << ',' << static_cast<long long>(o.y);
        for (double x : o.x) out << ',' << fmt(x);
        out << '\n';
      }
    }
  }
}

std::vector<Unit> read_glmm_csv(const std::filesystem::path& path) {
  std::vector<std::string> header;
  const auto rows = read_rows(path, header);
  require_header_prefix(header, {"subject", "visit", "smoke", "age_c", "y"}, path);
  std::map<long long, std::vector<std::pair<long long, Observation>>> by_subject;
  std::size_t line = 1;
  for (const auto& r : rows) {
    ++line;
    const auto subject = parse_number<long long>(r[0], path, line);
    const auto visit = parse_number<long long>(r[1], path, line);
    Observation o;
    o.x = {static_cast<double>(parse_number<long long>(r[2], path, line)),
           parse_number<double>(r[3], path, line)};
    o.y = static_cast<double>(parse_number<long long>(r[4], path, line));
    by_subject[subject].emplace_back(visit, std::move(o));
  }
  std::vector<Unit> units;
  std::uint64_t next = 0;
  for (auto& [id, visits] : by_subject) {
    std::sort(visits.begin(), visits.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    Unit u;
    u.global_index = next++;
    for (auto& v : visits) u.obs.push_back(std::move(v.second));
    units.push_back(std::move(u));
  }
  return units;
}

void write_glmm_csv(const std::filesystem::path& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << "subject,visit,smoke,age_c,y\n";
  for (const auto& u : pooled_units(data)) {
    for (std::size_t v = 0; v < u.obs.size(); ++v) {
      const auto& o = u.obs[v];
      out << u.global_index << ',' << v << ',' << static_cast<long long>(o.x.at(0)) << ','
          << fmt(o.x.at(1)) << ',' << static_cast<long long>(o.y) << '\n';
    }
  }
}

Dataset read_scalar_csv(const std::filesystem::path& path) {
  std::vector<std::string> header;
  const auto rows = read_rows(path, header);
  require_header_prefix(header, {"silo_id", "global_index", "y"}, path);
  std::map<std::size_t, std::vector<Unit>> by_silo;
  std::size_t line = 1;
  for (const auto& r : rows) {
    ++line;
    Unit u;
    u.global_index = parse_number<std::uint64_t>(r[1], path, line);
    u.obs.push_back(Observation{{}, parse_number<double>(r[2], path, line)});
    by_silo[parse_number<std::size_t>(r[0], path, line)].push_back(std::move(u));
  }
  return assemble(std::move(by_silo));
}

void write_scalar_csv(const std::filesystem::path& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << "silo_id,global_index,y\n";
  for (const auto& s : data.silos)
    for (const auto& u : s.units)
      for (const auto& o : u.obs) out << s.silo_id << ',' << u.global_index << ',' << fmt(o.y) << '\n';
}

}  // namespace fedvar
