#include "rolldrop/terrain.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "rolldrop/csv.hpp"
#include "rolldrop/errors.hpp"
#include "rolldrop/rng.hpp"

namespace rolldrop {

std::string to_string(TerrainKind kind) { return kind == TerrainKind::Flat ? "flat" : "rough"; }

TerrainKind terrain_kind_from_string(const std::string& s) {
  if (s == "flat") return TerrainKind::Flat;
  if (s == "rough") return TerrainKind::Rough;
  throw ConfigError("unknown terrain kind '" + s + "' (expected flat or rough)");
}

Terrain::Terrain() : x_min_(-1000.0), cell_(2000.0), heights_{0.0, 0.0} {}

Terrain::Terrain(double x_min, double cell_size, std::vector<double> heights)
    : x_min_(x_min), cell_(cell_size), heights_(std::move(heights)) {
  if (!(cell_ > 0.0)) throw ConfigError("terrain cell size must be positive");
  if (heights_.size() < 2) throw ConfigError("terrain needs at least two nodes");
}

double Terrain::height(double x) const {
  const double u = (x - x_min_) / cell_;
  if (u <= 0.0) return heights_.front();
  const auto last = static_cast<double>(heights_.size() - 1);
  if (u >= last) return heights_.back();
  const auto i = static_cast<std::size_t>(u);
  const double t = u - static_cast<double>(i);
  return heights_[i] + t * (heights_[i + 1] - heights_[i]);
}

double Terrain::slope(double x) const {
  const double u = (x - x_min_) / cell_;
  const auto last = static_cast<double>(heights_.size() - 1);
  if (u < 0.0 || u >= last) return 0.0;
  const auto i = static_cast<std::size_t>(u);
  return (heights_[i + 1] - heights_[i]) / cell_;
}

Terrain generate_terrain(TerrainKind kind, double amplitude, double cell_size, std::uint64_t seed,
                         double x_min, double length) {
  if (!(amplitude >= 0.0)) throw ConfigError("terrain amplitude must be >= 0");
  if (!(cell_size > 0.0) || !(length > 0.0)) throw ConfigError("terrain cell and length must be positive");
  const auto nodes = static_cast<std::size_t>(std::ceil(length / cell_size)) + 1;
  std::vector<double> h(nodes, 0.0);
  if (kind == TerrainKind::Rough && amplitude > 0.0) {
    RngStream rng(seed, 0, StreamId::Terrain);
    for (double& v : h) v = rng.uniform(-amplitude, amplitude);
  }
  return Terrain(x_min, cell_size, std::move(h));
}

Terrain generate_terrain(const TerrainSpec& spec, std::uint64_t seed) {
  return generate_terrain(spec.kind, spec.amplitude, spec.cell_size, seed, spec.x_min, spec.length);
}

void save_terrain_csv(const std::filesystem::path& path, const Terrain& terrain) {
  CsvWriter out(path, {"x_m", "height_m"});
  for (std::size_t i = 0; i < terrain.heights().size(); ++i) {
    out.row({terrain.x_min() + terrain.cell_size() * static_cast<double>(i), terrain.heights()[i]});
  }
}

Terrain load_terrain_csv(const std::filesystem::path& path) {
  const CsvTable table = read_csv(path);
  table.require_columns({"x_m", "height_m"});
  if (table.rows.size() < 2) throw ParseError(path.string(), 1, "terrain needs at least two rows");
  const auto xs = table.column("x_m");
  const auto hs = table.column("height_m");
  const double cell = xs[1] - xs[0];
  for (std::size_t i = 1; i < xs.size(); ++i) {
    if (std::abs((xs[i] - xs[i - 1]) - cell) > 1e-9 * std::max(1.0, std::abs(cell)))
      throw ParseError(path.string(), i + 2, "terrain nodes must be evenly spaced");
  }
  return Terrain(xs[0], cell, hs);
}

}  // namespace rolldrop
