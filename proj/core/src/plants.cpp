#include "mmpc/sim.hpp"

namespace mmpc {

ContinuousPlant spring_mass_plant(int masses, double mass, double stiffness, bool anchored) {
  if (masses < 1 || !(mass > 0.0) || stiffness < 0.0)
    throw DesignError("spring_mass_plant: bad parameters");
  const int nm = masses;
  Matrix k = Matrix::Zero(nm, nm);
  for (int i = 0; i + 1 < nm; ++i) {
    k(i, i) += stiffness;
    k(i + 1, i + 1) += stiffness;
    k(i, i + 1) -= stiffness;
    k(i + 1, i) -= stiffness;
  }
  if (anchored) {
    k(0, 0) += stiffness;
    k(nm - 1, nm - 1) += stiffness;
  }
  Matrix a = Matrix::Zero(2 * nm, 2 * nm);
  a.topRightCorner(nm, nm).setIdentity();
  a.bottomLeftCorner(nm, nm) = -k / mass;
  Matrix b = Matrix::Zero(2 * nm, nm);
  b.bottomRows(nm) = Matrix::Identity(nm, nm) / mass;
  Matrix c = Matrix::Zero(1, 2 * nm);
  c(0, 0) = 1.0;
  Matrix e = b.col(nm - 1);
  return make_continuous_plant(a, b, c, e);
}

ContinuousPlant tito_plant() {
  // Entry g/(tau s + 1) realized as x' = -x/tau + u/2, contribution (2g/tau) x.
  const double tau[4] = {7.0, 3.0, 8.0, 4.0};
  const double gain[4] = {1.0, 1.0, 2.0, 1.0};
  const int input[4] = {0, 1, 0, 1};
  const int output[4] = {0, 0, 1, 1};
  Matrix a = Matrix::Zero(4, 4);
  Matrix b = Matrix::Zero(4, 2);
  Matrix c = Matrix::Zero(2, 4);
  for (int i = 0; i < 4; ++i) {
    a(i, i) = -1.0 / tau[i];
    b(i, input[i]) = 0.5;
    c(output[i], i) = 2.0 * gain[i] / tau[i];
  }
  return make_continuous_plant(a, b, c, b);
}

ContinuousPlant surrogate_aircraft_plant() {
  Matrix a(4, 4);
  a << -0.03, 0.05, 0.0, -0.98,
       -0.25, -1.0, 8.0, 0.0,
        0.02, -0.3, -1.2, 0.0,
        0.0, 0.0, 1.0, 0.0;
  Matrix b(4, 2);
  b << 0.0, 0.5,
      -1.5, 0.02,
      -3.0, 0.0,
       0.0, 0.0;
  Matrix c = Matrix::Identity(4, 4);
  return make_continuous_plant(a, b, c, b);
}

}  // namespace mmpc
