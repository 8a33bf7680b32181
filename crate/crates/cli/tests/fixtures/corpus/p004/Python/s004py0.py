# min solution 0
x, y = map(int, input().split())
print(min(x, y))
