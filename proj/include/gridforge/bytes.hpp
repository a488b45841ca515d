#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <span>
#include <stdexcept>
#include <type_traits>
#include <vector>

namespace gridforge {

using Bytes = std::vector<std::byte>;

namespace detail {

template <typename T>
constexpr T to_little_endian(T value) noexcept
{
	if constexpr (std::endian::native == std::endian::big) {
		auto raw = std::bit_cast<std::array<std::byte, sizeof(T)>>(value);
		std::reverse(raw.begin(), raw.end());
		return std::bit_cast<T>(raw);
	} else {
		return value;
	}
}

} // namespace detail

/// Appends fixed-width little-endian integers and raw blocks to a byte buffer.
class ByteWriter {
public:
	explicit ByteWriter(Bytes& out) : out_(out) {}

	template <typename T>
		requires std::is_arithmetic_v<T>
	void put(T value)
	{
		const T le = detail::to_little_endian(value);
		const auto offset = out_.size();
		out_.resize(offset + sizeof(T));
		std::memcpy(out_.data() + offset, &le, sizeof(T));
	}

	void put_bytes(std::span<const std::byte> block)
	{
		out_.insert(out_.end(), block.begin(), block.end());
	}

	/// Reserves `count` bytes at the end and returns a view over them.
	std::span<std::byte> grow(std::size_t count)
	{
		const auto offset = out_.size();
		out_.resize(offset + count);
		return {out_.data() + offset, count};
	}

private:
	Bytes& out_;
};

/// Reads what ByteWriter wrote; running past the end throws std::out_of_range.
class ByteReader {
public:
	explicit ByteReader(std::span<const std::byte> in) : in_(in) {}

	template <typename T>
		requires std::is_arithmetic_v<T>
	T get()
	{
		require(sizeof(T));
		T le;
		std::memcpy(&le, in_.data() + pos_, sizeof(T));
		pos_ += sizeof(T);
		return detail::to_little_endian(le);
	}

	std::span<const std::byte> get_bytes(std::size_t count)
	{
		require(count);
		auto view = in_.subspan(pos_, count);
		pos_ += count;
		return view;
	}

	std::size_t remaining() const noexcept { return in_.size() - pos_; }
	bool done() const noexcept { return pos_ == in_.size(); }

private:
	void require(std::size_t count) const
	{
		if (in_.size() - pos_ < count) {
			throw std::out_of_range("byte reader: truncated input");
		}
	}

	std::span<const std::byte> in_;
	std::size_t pos_ = 0;
};

} // namespace gridforge
