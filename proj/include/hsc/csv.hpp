#pragma once

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "hsc/errors.hpp"

namespace hsc {

// CSV with a fixed float format (9 significant digits) so identical runs
// produce byte-identical files.
class CsvWriter {
public:
    explicit CsvWriter(const std::string& path) : os_(path, std::ios::trunc) {
        if (!os_) throw format_error(path + ": cannot open for writing");
    }

    void header(const std::vector<std::string>& names) {
        for (size_t i = 0; i < names.size(); ++i) {
            if (i) os_ << ',';
            os_ << names[i];
        }
        os_ << '\n';
    }

    void field(const std::string& s) {
        sep();
        os_ << s;
    }
    void field(const char* s) { field(std::string(s)); }
    void field(double v) {
        char buf[40];
        std::snprintf(buf, sizeof(buf), "%.9g", v);
        sep();
        os_ << buf;
    }
    void field(long long v) {
        sep();
        os_ << v;
    }
    void field(int v) { field(static_cast<long long>(v)); }

    void end_row() {
        os_ << '\n';
        first_ = true;
    }

private:
    void sep() {
        if (!first_) os_ << ',';
        first_ = false;
    }

    std::ofstream os_;
    bool first_ = true;
};

} // namespace hsc
