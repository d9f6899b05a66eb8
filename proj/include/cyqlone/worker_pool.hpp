#pragma once

#include <cyqlone/batch_matrix.hpp>

#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace cyqlone {

using batla::index_t;

/// Runs fn(i) for i = 0..count-1 on `workers` threads, item i on worker
/// i % workers. Work per item is independent, so the numerical result does
/// not depend on the worker count. The first exception thrown is rethrown
/// on the calling thread.
inline void parallel_for(index_t count, index_t workers,
                         const std::function<void(index_t)> &fn) {
    if (count <= 0)
        return;
    workers = std::max<index_t>(1, std::min(workers, count));
    if (workers == 1) {
        for (index_t i = 0; i < count; ++i)
            fn(i);
        return;
    }
    std::exception_ptr err;
    std::mutex err_mutex;
    auto run = [&](index_t w) {
        try {
            for (index_t i = w; i < count; i += workers)
                fn(i);
        } catch (...) {
            std::lock_guard<std::mutex> lock(err_mutex);
            if (!err)
                err = std::current_exception();
        }
    };
    std::vector<std::thread> threads;
    threads.reserve(static_cast<std::size_t>(workers - 1));
    for (index_t w = 1; w < workers; ++w)
        threads.emplace_back(run, w);
    run(0);
    for (auto &t : threads)
        t.join();
    if (err)
        std::rethrow_exception(err);
}

} // namespace cyqlone
