#include "unisig/tensor.hpp"

int main(int, char**) { return 0; }
