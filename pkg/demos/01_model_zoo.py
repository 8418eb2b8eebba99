# Building the eight architectures and counting their parameters.
#
# Convolutions in the MNIST models carry no bias, and batch norm follows every
# 3x3 / depthwise block. The CIFAR models put a bias on every non-classifier conv.

from nanocnn import ARCHITECTURES, build_model, count_params, apply_blurpool, apply_se

for name in ARCHITECTURES:
    model = build_model(name)
    print(f"{name:15s} {count_params(model):>8,d}")

# The smallest model, layer by layer
model = build_model("mnist-1.5k-dw")
print(model)

# BlurPool swaps max-pooling for dense max + binomial blur. Nothing learnable is
# added. SE adds a small bottleneck after each block's ReLU.
print("blurpool:", count_params(apply_blurpool(model)))
print("se:      ", count_params(apply_se(model)))
print("both:    ", count_params(apply_se(apply_blurpool(model))))
