#pragma once

#include "fieldflow/connection.hpp"

#include <memory>

namespace ff {

// Pointwise geometry bundle handed to density evaluations.
struct NodeGeom {
  const MetricField* metric;
  long node;
  int m;
  const double* g;
  const double* ginv;
  double sqrtg;
  double inv_minor(Mask I, Mask J) const { return metric->inv_minor(node, I, J); }
};

NodeGeom node_geom(const MetricField& gm, long node);

// Fiber potential V(phi) with an analytic gradient or a central-difference
// fallback (step 1e-5).
class Potential {
public:
  virtual ~Potential() = default;
  virtual double value(const double* phi, int n) const = 0;
  virtual void gradient(const double* phi, int n, double* out) const;
  virtual bool analytic_gradient() const { return false; }
  void fd_gradient(const double* phi, int n, double* out) const;
};

class ZeroPotential : public Potential {
public:
  double value(const double*, int) const override { return 0; }
  void gradient(const double*, int n, double* out) const override {
    for (int i = 0; i < n; ++i) out[i] = 0;
  }
  bool analytic_gradient() const override { return true; }
};

// V = mass * kappa(phi, phi); gradient 2 * mass * kappa phi.
class QuadraticPotential : public Potential {
public:
  QuadraticPotential(double mass, std::vector<double> kappa, int n);
  double value(const double* phi, int n) const override;
  void gradient(const double* phi, int n, double* out) const override;
  bool analytic_gradient() const override { return true; }

private:
  double mass_;
  std::vector<double> kappa_;
};

// V = lambda * kappa(phi,phi)^2 - mu * kappa(phi,phi).
class QuarticPotential : public Potential {
public:
  QuarticPotential(double lambda, double mu, std::vector<double> kappa, int n);
  double value(const double* phi, int n) const override;
  void gradient(const double* phi, int n, double* out) const override;
  bool analytic_gradient() const override { return true; }

private:
  double lambda_, mu_;
  std::vector<double> kappa_;
};

// Pointwise first-order Lagrangian density L(phi, nu, zeta) relative to the
// coordinate volume d^m x. Configuration degree k, fiber dimension n; phi and
// nu carry slot_count(m,k)*n values, zeta carries slot_count(m,k+1)*n, all in
// FormField component order. Derivative outputs use the same layouts; fiber
// derivatives not overridden fall back to central differences (step 1e-5).
class LagrangianDensity {
public:
  LagrangianDensity(int k_, int n_) : k(k_), n(n_) {}
  virtual ~LagrangianDensity() = default;
  int k, n;

  virtual double eval(const NodeGeom& geo, const double* phi, const double* nu,
                      const double* zeta) const = 0;
  virtual void d_phi(const NodeGeom& geo, const double* phi, const double* nu,
                     const double* zeta, double* out) const;
  virtual void d_nu(const NodeGeom& geo, const double* phi, const double* nu,
                    const double* zeta, double* out) const;
  virtual void d_zeta(const NodeGeom& geo, const double* phi, const double* nu,
                      const double* zeta, double* out) const;
  // Inverse Legendre map nu(alpha); must be exact for quadratic densities.
  virtual void nu_from_alpha(const NodeGeom& geo, const double* phi,
                             const double* alpha, double* nu) const = 0;
  // Dagger-representation flux theta as an (m-k-1)-form. The default
  // transports the star components through the interior-product isomorphism;
  // quadratic densities override with a Hodge-native evaluation.
  virtual FormField dagger_flux(const MetricField& gm, const FormField& phi,
                                const FormField& nu,
                                const FormField& zeta) const;
  virtual bool analytic_derivatives() const { return false; }
  // Constant fiber metric used for force conversion and boundary data.
  virtual const std::vector<double>& fiber_metric() const = 0;

  // Central-difference fallbacks, public for oracle comparisons.
  void fd_d_phi(const NodeGeom&, const double*, const double*, const double*,
                double* out) const;
  void fd_d_nu(const NodeGeom&, const double*, const double*, const double*,
               double* out) const;
  void fd_d_zeta(const NodeGeom&, const double*, const double*, const double*,
                 double* out) const;

  int phi_comps(int m) const { return slot_count(m, k) * n; }
  int zeta_comps(int m) const { return slot_count(m, k + 1) * n; }
};

// Matter density on 0-forms:
// L = sqrt(g) [ 1/2 kappa(nu,nu) - 1/2 g^{ij} kappa(zeta_i, zeta_j) - V(phi) ].
class MatterDensity : public LagrangianDensity {
public:
  MatterDensity(int n_, std::vector<double> kappa,
                std::shared_ptr<const Potential> V);
  double eval(const NodeGeom&, const double*, const double*,
              const double*) const override;
  void d_phi(const NodeGeom&, const double*, const double*, const double*,
             double*) const override;
  void d_nu(const NodeGeom&, const double*, const double*, const double*,
            double*) const override;
  void d_zeta(const NodeGeom&, const double*, const double*, const double*,
              double*) const override;
  void nu_from_alpha(const NodeGeom&, const double*, const double*,
                     double*) const override;
  FormField dagger_flux(const MetricField&, const FormField&, const FormField&,
                        const FormField&) const override;
  bool analytic_derivatives() const override { return true; }
  const std::vector<double>& fiber_metric() const override { return kappa_; }
  const Potential& potential() const { return *V_; }

private:
  std::vector<double> kappa_, kappa_inv_;
  std::shared_ptr<const Potential> V_;
};

// Yang-Mills density on the gauge potential (degree 1, velocity eps, field
// strength beta over 2-slots), with the positive fiber pairing pos = -K:
// L = sqrt(g) [ 1/2 g^{ij} pos(eps_i, eps_j) - 1/2 g^{IJ} pos(beta_I, beta_J) ].
class YangMillsDensity : public LagrangianDensity {
public:
  explicit YangMillsDensity(const LieAlgebra& la);
  double eval(const NodeGeom&, const double*, const double*,
              const double*) const override;
  void d_phi(const NodeGeom&, const double*, const double*, const double*,
             double*) const override;  // identically zero
  void d_nu(const NodeGeom&, const double*, const double*, const double*,
            double*) const override;
  void d_zeta(const NodeGeom&, const double*, const double*, const double*,
              double*) const override;
  void nu_from_alpha(const NodeGeom&, const double*, const double*,
                     double*) const override;
  FormField dagger_flux(const MetricField&, const FormField&, const FormField&,
                        const FormField&) const override;
  bool analytic_derivatives() const override { return true; }
  const std::vector<double>& fiber_metric() const override { return pos_; }

private:
  std::vector<double> pos_, pos_inv_;
};

// Whole-field wrappers (star components).
Density lagrangian_field(const LagrangianDensity& L, const MetricField& gm,
                         const FormField& phi, const FormField& nu,
                         const FormField& zeta);
FormField momentum_field(const LagrangianDensity& L, const MetricField& gm,
                         const FormField& phi, const FormField& nu,
                         const FormField& zeta);
FormField flux_dual_field(const LagrangianDensity& L, const MetricField& gm,
                          const FormField& phi, const FormField& nu,
                          const FormField& zeta);
FormField config_gradient_field(const LagrangianDensity& L, const MetricField& gm,
                                const FormField& phi, const FormField& nu,
                                const FormField& zeta);
FormField velocity_from_momentum(const LagrangianDensity& L, const MetricField& gm,
                                 const FormField& phi, const FormField& alpha);
// Energy density relative to d^m x: contract(d_nu, nu) - L.
Density energy_density_field(const LagrangianDensity& L, const MetricField& gm,
                             const FormField& phi, const FormField& nu,
                             const FormField& zeta);

}  // namespace ff
