import numpy as np
import pytest
from PIL import Image


@pytest.fixture
def write_png(tmp_path):
    def write(arr, name="img.png", mode=None):
        path = tmp_path / name
        Image.fromarray(np.asarray(arr, dtype=np.uint8), mode).save(path)
        return path
    return write


@pytest.fixture(scope="session")
def blob_manifest(tmp_path_factory):
    """Two-class 20-per-class 16x16 blob set, split 16/2/2 per class, train augmented."""
    from leafnet.data.manifest import scan_dataset, split_dataset
    from leafnet.synthetic import make_blob_dataset

    root = tmp_path_factory.mktemp("blob16")
    make_blob_dataset(root, num_classes=2, per_class=20, size=16, seed=0)
    names, found = scan_dataset(root)
    return split_dataset(found, names, seed=0)


@pytest.fixture(scope="session")
def blob_loader():
    from leafnet.data.batches import ImageLoader

    return ImageLoader(image_size=16, cache=True)


_ACCEPTANCE = pytest.StashKey()


@pytest.fixture(scope="session")
def acceptance_log(request):
    return request.config.stash.setdefault(_ACCEPTANCE, [])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
