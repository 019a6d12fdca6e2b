#pragma once

#include <memory>
#include <string>
#include <vector>

#include "covphase/ddw.hpp"
#include "covphase/presymplectic.hpp"

namespace covphase {

class LongitudinalProjector;

struct StateBlock {
  std::string name;
  Eigen::Index offset = 0;
  Eigen::Index size = 0;
};

// Slice system of a covariant model on a periodic spatial lattice.
// Layouts (component-major, N sites):
//   free particle   q | p
//   vector boson    phi (r N) | p (r N) | beta (d r N, index (j r + a) N + site)
//   electrodynamics a (3N) | p (3N) | beta (3N, pairs 12 13 23) | a0 (N)
class SliceModel {
 public:
  SliceModel(FieldTheorySpec spec, SpatialLattice lattice);

  const FieldTheorySpec& spec() const { return spec_; }
  const SpatialLattice& lattice() const { return lattice_; }
  const PresymplecticSystem& system() const { return system_; }
  const std::vector<StateBlock>& blocks() const { return blocks_; }
  const StateBlock& block(const std::string& name) const;
  bool has_block(const std::string& name) const;
  Eigen::Index dim() const { return system_.dim(); }

  const std::string& position_block() const { return position_; }
  const std::string& momentum_block() const { return momentum_; }
  // blocks fixed to zero after the constraint algorithm (free gauge parameters)
  const std::vector<std::string>& inert_blocks() const { return inert_; }

  // Ambient covector e with e . z = value of the named field component at a site.
  // Components: q p (free particle); phi P0 P1.. (vector boson); A0..A3, AT1..AT3,
  // AL1..AL3, Pmn with m != n (electrodynamics). Throws IndexOutOfRange.
  Vector field_covector(const std::string& component, int fiber, Eigen::Index site) const;
  std::vector<std::string> components() const;
  // components whose evaluation depends on the gauge representative
  bool gauge_variant(const std::string& component) const;

  const LongitudinalProjector& longitudinal() const;

  nlohmann::json summary() const;

 private:
  FieldTheorySpec spec_;
  SpatialLattice lattice_;
  PresymplecticSystem system_;
  std::vector<StateBlock> blocks_;
  std::string position_;
  std::string momentum_;
  std::vector<std::string> inert_;
  std::shared_ptr<const LongitudinalProjector> longitudinal_;
};

SliceModel build_slice_system(const FieldTheorySpec& spec, const SpatialLattice& lattice);

// Constraint algorithm on the slice system, followed by pinning the inert blocks.
ConstraintChainResult analyze_slice(const SliceModel& model, double rank_rtol = kDefaultRankRtol, int max_iter = 64);

Vector restrict_to_slice(const SliceModel& model, const DiscretizedSection& section, int t_index);
DiscretizedSection curve_to_section(const SliceModel& model, const std::vector<Vector>& states,
                                    const SpacetimeLattice& lattice);

}  // namespace covphase
