"""Smallest-scale argument sets for every command, shared by the golden and reproducibility tests."""

GOLDEN_ARGS = {
    "sample": ["--n", "2", "--N", "3"],
    "width": ["--n", "2", "--N", "4,8", "--R", "2", "--M", "4"],
    "orlicz": ["--n", "2", "--N", "4,8", "--R", "2", "--M", "4", "--samples", "1000"],
    "sweep": ["--n", "2", "--N", "4,8,16", "--R", "2", "--M", "4", "--y-draws", "2"],
    "concentrate": ["--n", "2", "--N", "4", "--R", "2", "--M", "4", "--draws", "100", "--t", "0.1,0.5"],
    "lipschitz": ["--n", "2", "--N", "4", "--pairs", "10", "--R", "2", "--M", "4"],
    "tailprobe": ["--n", "2", "--N", "64", "--samples", "1000"],
    "inclusion": ["--n", "2", "--N", "8", "--trials", "2", "--M", "4", "--samples", "100"],
    "bound": ["--law", "fixed", "--n", "2", "--N", "4", "--R", "2", "--M", "4"],
}
