#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace rolldrop {

enum class TerrainKind { Flat, Rough };

std::string to_string(TerrainKind kind);
TerrainKind terrain_kind_from_string(const std::string& s);

struct TerrainSpec {
  TerrainKind kind = TerrainKind::Flat;
  double amplitude = 0.02;  // m
  double cell_size = 0.25;  // m
  double x_min = 0.0;       // m
  double length = 40.0;     // m
  bool operator==(const TerrainSpec&) const = default;
};

// Piecewise-linear heightfield with nodes every cell_size metres starting at
// x_min. Outside the node range the end heights are held constant.
class Terrain {
 public:
  Terrain();
  Terrain(double x_min, double cell_size, std::vector<double> heights);

  double height(double x) const;
  double slope(double x) const;
  double x_min() const { return x_min_; }
  double x_max() const { return x_min_ + cell_ * static_cast<double>(heights_.size() - 1); }
  double cell_size() const { return cell_; }
  const std::vector<double>& heights() const { return heights_; }
  bool operator==(const Terrain&) const = default;

 private:
  double x_min_;
  double cell_;
  std::vector<double> heights_;
};

// Node heights are i.i.d. uniform(-amplitude, amplitude) drawn from the
// Terrain stream of `seed`; the flat kind returns an all-zero field.
Terrain generate_terrain(TerrainKind kind, double amplitude, double cell_size, std::uint64_t seed,
                         double x_min = 0.0, double length = 40.0);
Terrain generate_terrain(const TerrainSpec& spec, std::uint64_t seed);

// CSV with header `x_m,height_m`, one row per node.
void save_terrain_csv(const std::filesystem::path& path, const Terrain& terrain);
Terrain load_terrain_csv(const std::filesystem::path& path);

}  // namespace rolldrop
