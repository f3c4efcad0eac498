#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "prada/autodiff/tensor.hpp"
#include "prada/model/student.hpp"

namespace prada::eval {

struct ProjectionPoint {
  double x = 0.0;
  double y = 0.0;
  std::string domain;
  std::string arm;
};

struct Projection {
  std::vector<ProjectionPoint> points;
  std::vector<double> mean;                 // D
  std::array<std::vector<double>, 2> axes;  // unit principal directions, first nonzero entry positive
  std::array<double, 2> variance{};         // along each axis
};

// Projects the rows of X [N x D] onto their two leading principal components.
// Labels are copied through. Axis signs are canonicalized so the result is
// deterministic.
Projection principal_projection(const ad::Tensor& x, const std::vector<std::string>& domains, const std::string& arm);

// Max absolute difference between the centered rows of X and their
// reconstruction from the two projected coordinates.
double reconstruction_error(const ad::Tensor& x, const Projection& p);

struct LabeledQuestion {
  std::string q;  // formatted
  std::string domain;
};

// Pooled features of each question, reduced to 2-D. Needs at least two
// domains with at least ten questions each, else DataError.
Projection project_embeddings(const model::StudentModel& model, const std::vector<LabeledQuestion>& samples,
                              const std::string& arm);

std::string projection_csv(const std::vector<ProjectionPoint>& points);
// One scatter panel per arm, colored by domain.
std::string projection_svg(const std::vector<ProjectionPoint>& points, const std::string& title);

}  // namespace prada::eval
