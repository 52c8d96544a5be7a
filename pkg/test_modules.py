"""
Basic import and initialization tests for GuideTouch modules.
Run this to verify all modules can be imported successfully.
"""

import sys
import os

# Make the repository root importable when run directly
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))


def test_imports():
    """Test that all modules can be imported."""
    print("Testing imports...")

    print("✓ Testing utils...")
    from app.utils import logger, preprocess
    print("  ✓ logger imported")
    print("  ✓ preprocess imported")

    print("\n✓ Testing core modules...")
    from app import scene_geometry, tof_model, pipeline, haptics_codec, experiment, stats
    print("  ✓ scene_geometry imported")
    print("  ✓ tof_model imported")
    print("  ✓ pipeline imported")
    print("  ✓ haptics_codec imported")
    print("  ✓ experiment imported")
    print("  ✓ stats imported")

    print("\n✓ Testing outer modules...")
    from app import config, render, reports, cli
    print("  ✓ config, render, reports, cli imported")

    assert callable(cli.main)
    print("\n✅ All imports successful!")


def test_initialization():
    """Test that core objects can be initialized."""
    print("\n" + "=" * 50)
    print("Testing initialization...")

    from app.utils.logger import get_logger
    logger = get_logger("test")
    logger.info("Logger test")
    print("✓ Logger initialized")

    from app.config import RunConfig
    from app.pipeline import DetectionConfig, GuidePipeline
    from app.tof_model import DualRig, NoiseModel
    cfg = RunConfig()
    rig = DualRig.from_config(cfg.rig)
    pipeline = GuidePipeline(rig, DetectionConfig.from_settings(cfg.detection), NoiseModel.off())
    assert len(pipeline.log) == 0
    assert rig == DualRig.default()
    print("✓ GuidePipeline initialized")

    from app.haptics_codec import patterns_for
    assert len(patterns_for("A")) == 15
    print("✓ Pattern sets initialized")

    print("\n✅ All initializations successful!")


if __name__ == "__main__":
    print("=" * 50)
    print("GuideTouch - Module Tests")
    print("=" * 50 + "\n")

    results = []
    for check in (test_imports, test_initialization):
        try:
            check()
            results.append(True)
        except Exception as e:
            print(f"\n❌ {check.__name__} failed: {e}")
            import traceback
            traceback.print_exc()
            results.append(False)

    print("\n" + "=" * 50)
    if all(results):
        print("✅ ALL TESTS PASSED")
        sys.exit(0)
    else:
        print("❌ SOME TESTS FAILED")
        sys.exit(1)
