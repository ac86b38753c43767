"""Smoke test for the pw_warehouse extension.

Build and run:
    maturin develop -m crates/python/Cargo.toml
    python crates/python/python/smoke_test.py
"""

import pw_warehouse as pw

CAR_BUYER = [
    "Car.year > 2007",
    "Car.price < 20000",
    "Car.color = 'black'",
    "Advertisement.region = 'Rhone-Alpes'",
]


def car_ids(result):
    return [row[0] for row in result["rows"]]


def main():
    wh = pw.Warehouse.cars_mini()
    assert wh.fact_rows == 12 and wh.generation == 4

    full = wh.query("Select * From Car")
    assert full["answered_from"] == "FULL_WAREHOUSE"
    assert len(full["rows"]) == 8

    view = pw.personalize(wh, "alice", CAR_BUYER)
    wide = view.query("Select * From Car")
    assert wide["answered_from"] == "USER_VIEW"
    assert car_ids(wide) == [1, 3, 6, 8], wide
    assert wide == pw.oracle_query(wh, CAR_BUYER, "Select * From Car") | {"answered_from": "USER_VIEW"}

    narrow = view.query("Select * From Car where model = 'BMW'")
    assert car_ids(narrow) == [1, 8]

    stats = view.stats()
    kept = {d["dimension"]: (d["kept"], d["total"]) for d in stats["dimensions"]}
    assert kept["Car"] == (4, 8), kept

    half = pw.personalize(wh, "alice", CAR_BUYER, degree=0.5, mode="full")
    assert car_ids(half.query("Select * From Car")) == [1, 3, 5, 6, 8]
    assert half.profile_hash != view.profile_hash

    wh.ingest("Sales", "car_id,owner_id,ad_id,euro_sold\n8,3,5,19000.00\n")
    try:
        view.query("Select * From Car")
    except pw.WarehouseError as e:
        assert "generation" in str(e)
    else:
        raise AssertionError("stale view answered a query")
    view.rebuild()
    total = view.query("SELECT count(euro_sold) FROM Sales")
    assert total["rows"] == [[6]], total

    try:
        wh.query("Select * Form Car")
    except pw.WarehouseError as e:
        assert "position 9" in str(e)
    else:
        raise AssertionError("syntax error not raised")

    assert pw.parse_preference("Car.year>2007") == "Car.year > 2007"
    try:
        pw.parse_preference("Car.color < ALL")
    except pw.WarehouseError:
        pass
    else:
        raise AssertionError("ALL accepted with <")
    print("python smoke test passed")


if __name__ == "__main__":
    main()
