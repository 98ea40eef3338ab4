#pragma once

#include <cstddef>
#include <functional>

namespace bsdecert {

/// Caps worker threads used by path-parallel loops. 0 restores the default
/// (hardware concurrency). Results never depend on this value.
void set_thread_cap(unsigned n) noexcept;
unsigned thread_cap() noexcept;

/// Fixed chunk width for path-parallel reductions. Chunk boundaries depend only
/// on the path count, so per-chunk partial sums reduced in chunk order give the
/// same bits for any worker count.
inline constexpr std::size_t kPathChunk = 1024;

inline std::size_t chunk_count(std::size_t n, std::size_t chunk = kPathChunk) noexcept {
    return (n + chunk - 1) / chunk;
}

/// Calls fn(chunk_index, begin, end) for every chunk of [0, n), possibly concurrently.
void parallel_chunks(std::size_t n, const std::function<void(std::size_t, std::size_t, std::size_t)>& fn,
                     std::size_t chunk = kPathChunk);

}  // namespace bsdecert
