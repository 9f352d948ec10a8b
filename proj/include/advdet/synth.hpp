#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "advdet/aat.hpp"
#include "advdet/dataset.hpp"
#include "advdet/model.hpp"

namespace advdet::synth {

struct GaussComponent {
  double mean;
  double std;
  int count;
};

// In-class data from a Gaussian mixture on the line, out-of-class data uniform
// on [0,1].
struct MixtureSpec1D {
  std::vector<GaussComponent> components;
  int negative_count = 500;

  // two tight modes at 0.4 and 0.6, 250 draws each
  static MixtureSpec1D two_modes() { return {{{0.4, 0.01, 250}, {0.6, 0.005, 250}}, 500}; }
};

// labels: 1 for mixture draws, 0 for uniform negatives
Dataset sample_1d(const MixtureSpec1D& spec, std::uint64_t seed);

// exp(logit) on the grid, normalized to unit trapezoid integral
std::vector<double> estimate_density_1d(const models::Model& detector, const std::vector<double>& grid);

// mixture pdf with component weights proportional to their counts
double mixture_pdf(const MixtureSpec1D& spec, double x);

std::vector<double> uniform_grid(double lo, double hi, int points);

// total variation distance (1/2) * integral |p - q| by the trapezoid rule;
// densities must share the grid
double density_distance(const std::vector<double>& grid, const std::vector<double>& p, const std::vector<double>& q);

// grid points that are strict local maxima, strongest first
std::vector<double> density_modes(const std::vector<double>& grid, const std::vector<double>& density);

enum class Toy2DKind { Circles, Moons, GridScatter };

struct Toy2DSpec {
  Toy2DKind kind = Toy2DKind::Moons;
  int points_per_class = 1000;
  double noise = 0.08;
  std::uint64_t seed = 0;
};

// labels: 1 for the in-class pattern, 0 for the complementary pattern
Dataset sample_2d(const Toy2DSpec& spec);

struct Field2D {
  int nx = 0, ny = 0;
  double x0 = 0, x1 = 0, y0 = 0, y1 = 0;
  std::vector<double> sigmoid;  // row-major, ny rows of nx

  double x_at(int i) const { return x0 + (x1 - x0) * i / (nx - 1); }
  double y_at(int j) const { return y0 + (y1 - y0) * j / (ny - 1); }
};

Field2D map_sigmoid_field(const models::Model& detector, double x0, double x1, double y0, double y1, int nx, int ny);

// CSV "x,p"
void write_density_csv(const std::string& path, const std::vector<double>& grid, const std::vector<double>& density,
                       const std::string& config_hash = "");
// CSV "x,y,sigmoid"
void write_field_csv(const std::string& path, const Field2D& field, const std::string& config_hash = "");

}  // namespace advdet::synth
