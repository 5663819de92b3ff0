#pragma once

#include <charconv>
#include <cstdio>
#include <stdexcept>
#include <string>

namespace abkt {

// Shortest decimal representation that round-trips to the same double.
// Integral values keep a trailing ".0" so numeric columns stay typed.
inline std::string format_double(double value) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), value);
    if (res.ec != std::errc{}) {
        throw std::runtime_error("format_double: conversion failed");
    }
    std::string s(buf, res.ptr);
    if (s.find('.') == std::string::npos && s.find('e') == std::string::npos &&
        s.find("inf") == std::string::npos && s.find("nan") == std::string::npos) {
        s += ".0";
    }
    return s;
}

inline double parse_double(const std::string& s) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
        throw std::runtime_error("parse_double: bad number '" + s + "'");
    }
    return v;
}

}  // namespace abkt
