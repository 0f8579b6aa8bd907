#pragma once

#include <cstdio>
#include <string>

namespace tsflow {

// Round-trip decimal rendering (%.17g): re-parsing gives back the exact
// double, and identical values always print identically, which the
// byte-identical-rerun contract on every exported file relies on.
inline std::string fmt_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

}  // namespace tsflow
