def pytest_configure(config):
    config.addinivalue_line("markers", "e2e: full learned-pipeline acceptance (slow)")
