#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace crank {

// Dense row-major double tensor; shapes are small so no view machinery.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    data.assign(numel_of(shape), 0.0);
  }

  static std::size_t numel_of(const std::vector<int>& s) {
    std::size_t n = 1;
    for (int d : s) n *= static_cast<std::size_t>(d);
    return n;
  }

  std::size_t numel() const { return data.size(); }
  int dim(std::size_t i) const { return shape[i]; }
  double* ptr() { return data.data(); }
  const double* ptr() const { return data.data(); }

  double& at(int a) { return data[static_cast<std::size_t>(a)]; }
  double& at(int a, int b) {
    return data[static_cast<std::size_t>(a) * shape[1] + b];
  }
  double& at(int a, int b, int c) {
    return data[(static_cast<std::size_t>(a) * shape[1] + b) * shape[2] + c];
  }
  double at(int a) const { return data[static_cast<std::size_t>(a)]; }
  double at(int a, int b) const {
    return data[static_cast<std::size_t>(a) * shape[1] + b];
  }
  double at(int a, int b, int c) const {
    return data[(static_cast<std::size_t>(a) * shape[1] + b) * shape[2] + c];
  }

  void zero() { data.assign(data.size(), 0.0); }

  std::string shape_str() const;
};

}  // namespace crank
