#pragma once

#include "gridforge/topology.hpp"

#include <Eigen/Core>

#include <concepts>
#include <stdexcept>

namespace gridforge {

template <typename Scalar>
using Vector3 = Eigen::Matrix<Scalar, 3, 1>;

template <typename Scalar>
struct Box {
	Vector3<Scalar> min;
	Vector3<Scalar> max;
};

/// What the grid needs from a geometry: physical placement of any cell.
template <typename G>
concept CellGeometry = requires(const G& g, const Topology& t, CellId id) {
	typename G::Scalar;
	{ g.cell_center(t, id) } -> std::convertible_to<Vector3<typename G::Scalar>>;
	{ g.cell_bounding_box(t, id) } -> std::convertible_to<Box<typename G::Scalar>>;
	{ g.cell_length(t, 0) } -> std::convertible_to<Vector3<typename G::Scalar>>;
};

/*!
Homogeneous cartesian geometry: cells of equal refinement level are identical
boxes, each level halving the edge length of the previous one.
*/
template <typename Scalar_ = double>
class ConstantGeometry {
public:
	using Scalar = Scalar_;

	ConstantGeometry() : origin_(Vector3<Scalar>::Zero()), level0_size_(Vector3<Scalar>::Ones()) {}

	ConstantGeometry(const Vector3<Scalar>& origin, const Vector3<Scalar>& level0_cell_size)
		: origin_(origin), level0_size_(level0_cell_size)
	{
		if ((level0_size_.array() <= Scalar(0)).any()) {
			throw std::invalid_argument("geometry: cell size must be positive");
		}
	}

	const Vector3<Scalar>& origin() const noexcept { return origin_; }
	const Vector3<Scalar>& level0_cell_size() const noexcept { return level0_size_; }

	/// Edge lengths of a cell of the given level.
	Vector3<Scalar> cell_length(const Topology& topology, int level) const
	{
		return index_length(topology) * Scalar(topology.cell_size_in_indices(level));
	}

	Scalar cell_volume(const Topology& topology, int level) const
	{
		return cell_length(topology, level).prod();
	}

	Box<Scalar> cell_bounding_box(const Topology& topology, CellId id) const
	{
		const Indices corner = topology.indices_of(id);
		const Vector3<Scalar> length = cell_length(topology, topology.level_of(id));
		Box<Scalar> box;
		box.min = origin_ + index_length(topology).cwiseProduct(to_vector(corner));
		box.max = box.min + length;
		return box;
	}

	Vector3<Scalar> cell_center(const Topology& topology, CellId id) const
	{
		const Indices corner = topology.indices_of(id);
		const Scalar half_span = Scalar(topology.cell_size_in_indices(topology.level_of(id))) / Scalar(2);
		return origin_
		       + index_length(topology).cwiseProduct(to_vector(corner) + Vector3<Scalar>::Constant(half_span));
	}

private:
	/// Physical length of one index: level-0 size over 2^L.
	Vector3<Scalar> index_length(const Topology& topology) const
	{
		return level0_size_ / Scalar(topology.cell_size_in_indices(0));
	}

	static Vector3<Scalar> to_vector(const Indices& indices)
	{
		return Vector3<Scalar>(Scalar(indices[0]), Scalar(indices[1]), Scalar(indices[2]));
	}

	Vector3<Scalar> origin_;
	Vector3<Scalar> level0_size_;
};

static_assert(CellGeometry<ConstantGeometry<double>>);

} // namespace gridforge
