#pragma once

#include <doctest.h>

#include "helpers.hpp"
